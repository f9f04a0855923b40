import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from cda.metrics import (
    HISTORY_HEADER,
    EmbeddingDump,
    HistoryWriter,
    accuracy,
    export_history,
    pca_project,
    read_embeddings,
    read_history,
    render_scatter,
    scatter_from_dump,
    write_embeddings,
)
from cda.schedule import Stage
from cda.trainer import EpochRecord

SVG_NS = "{http://www.w3.org/2000/svg}"


def _record(e, rng):
    return EpochRecord(
        epoch=e,
        stage=Stage.ADVERSARIAL,
        lam=float(rng.uniform()),
        beta=0.0,
        l_ce=float(rng.uniform(0, 2)),
        l_supcl=float(rng.uniform(0, 2)),
        l_adv=-float(rng.uniform(0, 2)),
        l_crosscl=0.0,
        src_acc=float(rng.uniform()),
        tgt_acc=float(rng.uniform()),
        pseudo_acc=float(rng.uniform()),
        lr=1.23456789e-4,
    )


# -------------------------------------------------------------------- history


def test_export_history_row_count(tmp_path, rng):
    p = export_history([_record(e, rng) for e in (1, 2, 3)], tmp_path / "h.csv")
    lines = p.read_text().splitlines()
    assert len(lines) == 4
    assert lines[0] == "epoch,stage,lambda,beta,l_ce,l_supcl,l_adv,l_crosscl,src_acc,tgt_acc,pseudo_acc,lr"


def test_export_history_round_trip(tmp_path, rng):
    hist = [_record(e, rng) for e in range(1, 6)]
    rows = read_history(export_history(hist, tmp_path / "h.csv"))
    for rec, row in zip(hist, rows):
        assert row["epoch"] == rec.epoch and row["stage"] == "adversarial"
        for key, attr in [("lambda", "lam"), ("l_ce", "l_ce"), ("l_adv", "l_adv"), ("lr", "lr"), ("tgt_acc", "tgt_acc")]:
            assert row[key] == pytest.approx(getattr(rec, attr), rel=5e-6)
    assert ",0.000123457\n" in (tmp_path / "h.csv").read_text()


def test_export_history_empty_is_error(tmp_path):
    with pytest.raises(ValueError, match="empty"):
        export_history([], tmp_path / "h.csv")


def test_export_history_unwritable(tmp_path, rng):
    with pytest.raises(OSError):
        export_history([_record(1, rng)], tmp_path / "missing" / "h.csv")


def test_export_history_append_consistent(tmp_path, rng):
    hist = [_record(e, rng) for e in range(1, 5)]
    short = export_history(hist[:3], tmp_path / "a.csv").read_text().splitlines()
    long = export_history(hist, tmp_path / "b.csv").read_text().splitlines()
    assert long[:4] == short


def test_incremental_writer_matches_export(tmp_path, rng):
    hist = [_record(e, rng) for e in range(1, 4)]
    w = HistoryWriter(tmp_path / "inc.csv")
    for r in hist:
        w.append(r)
    assert (tmp_path / "inc.csv").read_bytes() == export_history(hist, tmp_path / "all.csv").read_bytes()


# ------------------------------------------------------------------ embeddings


def test_embedding_dump_round_trip(tmp_path, rng):
    dump = EmbeddingDump(["source", "target", "target"], [0, 1, -1], rng.standard_normal((3, 4)), 7, "abc")
    back = read_embeddings(write_embeddings(dump, tmp_path / "e.csv"))
    assert back.domains == dump.domains and back.epoch == 7 and back.config_hash == "abc"
    assert back.embeddings.tobytes() == dump.embeddings.tobytes()
    np.testing.assert_array_equal(back.labels, dump.labels)
    assert (tmp_path / "e.csv").read_text().splitlines()[1] == "domain,label,e0,e1,e2,e3"


def test_embedding_dump_rejects_bad_labels(rng):
    with pytest.raises(ValueError):
        EmbeddingDump(["s"], [-2], rng.standard_normal((1, 2)))


# ------------------------------------------------------------------------ PCA


def test_pca_2d_centered_is_rotation(rng):
    X = rng.standard_normal((40, 2)) * [3.0, 1.0]
    X -= X.mean(0)
    P = pca_project(X, 2)
    d0 = np.linalg.norm(X[:, None] - X[None], axis=-1)
    d1 = np.linalg.norm(P[:, None] - P[None], axis=-1)
    assert np.max(np.abs(d0 - d1)) < 1e-9


def test_pca_rank_one(rng):
    t = rng.standard_normal(50)
    X = np.outer(t, [1.0, -2.0, 0.5]) + [4.0, 1.0, -3.0]
    P = pca_project(X, 2)
    assert P[:, 1].var() < 1e-9
    assert P[:, 0].var() > 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(4, 40), d=st.integers(2, 6))
def test_pca_ordering_and_zero_mean(seed, n, d):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d)) * rng.uniform(0.1, 3, d) + rng.standard_normal(d) * 10
    P = pca_project(X, 2)
    assert P.shape == (n, 2)
    assert np.all(np.abs(P.mean(0)) < 1e-9)
    assert P[:, 0].var() >= P[:, 1].var() - 1e-12


def test_pca_sign_convention_is_stable(rng):
    X = rng.standard_normal((30, 3))
    np.testing.assert_array_equal(pca_project(X), pca_project(X.copy()))
    # Flipping every coordinate leaves the eigenvectors (and their fixed signs) unchanged.
    np.testing.assert_allclose(pca_project(-X), -pca_project(X), atol=1e-12)


def test_pca_degenerate():
    with pytest.raises(ValueError, match="degenerate"):
        pca_project(np.ones((5, 3)))
    with pytest.raises(ValueError):
        pca_project(np.ones((2, 3)), 2)


# ------------------------------------------------------------------------ SVG


def _markers(path, cls="pt"):
    root = ET.parse(path).getroot()
    return [el for el in root.iter() if el.get("class") == cls]


def test_svg_empty_is_valid(tmp_path):
    p = render_scatter(np.zeros((0, 2)), [], [], tmp_path / "e.svg")
    root = ET.parse(p).getroot()
    assert root.tag == SVG_NS + "svg" and root.get("version") == "1.1"
    assert _markers(p) == []
    assert root.find(f".//{SVG_NS}g[@id='legend']") is not None


def test_svg_three_markers(tmp_path):
    p = render_scatter([[0, 0], [1, 1], [2, 0]], [0, 1, 0], ["source", "target", "target"], tmp_path / "s.svg")
    assert len(_markers(p)) == 3
    tags = sorted(el.tag.replace(SVG_NS, "") for el in _markers(p))
    assert tags == ["circle", "polygon", "polygon"]
    assert len(_markers(p, "legend")) == 2


def test_svg_deterministic(tmp_path, rng):
    coords = rng.standard_normal((25, 2))
    labels = rng.integers(0, 3, 25)
    doms = ["source" if v else "target" for v in rng.integers(0, 2, 25)]
    a = render_scatter(coords, labels, doms, tmp_path / "a.svg", "t").read_bytes()
    b = render_scatter(coords, labels, doms, tmp_path / "b.svg", "t").read_bytes()
    assert a == b


def test_svg_errors(tmp_path):
    with pytest.raises(ValueError):
        render_scatter([[np.nan, 0]], [0], ["s"], tmp_path / "x.svg")
    with pytest.raises(OSError):
        render_scatter([[0, 0]], [0], ["s"], tmp_path / "nope" / "x.svg")


def test_scatter_from_dump(tmp_path, rng):
    dump = EmbeddingDump(["source"] * 5 + ["target"] * 5, [0, 1] * 5, rng.standard_normal((10, 4)))
    assert len(_markers(scatter_from_dump(dump, tmp_path / "d.svg"))) == 10


# -------------------------------------------------------------------- accuracy


def test_accuracy_matches_counting_oracle(rng):
    for _ in range(20):
        p, y = rng.integers(0, 4, 30), rng.integers(0, 4, 30)
        assert accuracy(p, y) == oracles.count_accuracy(p.tolist(), y.tolist())
    with pytest.raises(ValueError):
        accuracy([], [])


def test_history_header_constant():
    assert len(HISTORY_HEADER) == 12
