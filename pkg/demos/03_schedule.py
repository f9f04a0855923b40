"""Stage gating and the lambda / beta ramps for the two-moons and digits schedules."""

from cda.schedule import ScheduleConfig, weights_at

for name, cfg in [
    ("two-moons", ScheduleConfig(E=60, E_prime=15, E_double_prime=25)),
    ("digits", ScheduleConfig(E=200, E_prime=40, E_double_prime=60)),
]:
    print(f"{name}: E={cfg.E}, E'={cfg.E_prime}, E''={cfg.E_double_prime}")
    print("  epoch  stage          lambda  beta")
    step = max(1, cfg.E // 12)
    for e in list(range(0, cfg.E + 1, step)) + [cfg.E_prime, cfg.E_double_prime]:
        w = weights_at(e, cfg)
        print(f"  {e:5d}  {w.stage.value:13s}  {w.lam:.3f}   {w.beta:.3f}")

# Misordered stage boundaries are rejected up front.
print(ScheduleConfig(E=60, E_prime=30, E_double_prime=20).violations())
