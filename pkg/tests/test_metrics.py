from fractions import Fraction

import numpy as np
import pytest

from promptseg.errors import ShapeError
from promptseg.metrics import (
    COLOR_CORRECT,
    COLOR_FALSE_ALARM,
    COLOR_IGNORED,
    COLOR_MISS,
    ConfusionMatrix,
    MetricSummary,
    export_error_ply,
    render_table,
    summarize,
)


def brute_force_summary(gt, pred, num_classes=7, ignore_index=255):
    """Per-class set computation in exact rational arithmetic."""
    keep = gt != ignore_index
    gt, pred = gt[keep], pred[keep]
    iou, acc, present = [], [], []
    for c in range(num_classes):
        in_gt = set(np.flatnonzero(gt == c).tolist())
        in_pred = set(np.flatnonzero(pred == c).tolist())
        union = in_gt | in_pred
        present.append(bool(union))
        if union:
            iou.append(Fraction(len(in_gt & in_pred), len(union)))
            acc.append(Fraction(len(in_gt & in_pred), len(in_gt)) if in_gt
                       else Fraction(0))
        else:
            iou.append(None)
            acc.append(None)
    kept = [v for v in iou if v is not None]
    miou = sum(kept) / len(kept) if kept else None
    kept_acc = [v for v in acc if v is not None]
    macc = sum(kept_acc) / len(kept_acc) if kept_acc else None
    allacc = Fraction(int((gt == pred).sum()), len(gt)) if len(gt) else None
    return iou, acc, present, miou, macc, allacc


def make_summary(gt, pred, **kwargs):
    cm = ConfusionMatrix(**kwargs)
    cm.update(np.asarray(gt), np.asarray(pred))
    return summarize(cm)


# -- update / hand counts -----------------------------------------------------------

def test_hand_count_example():
    cm = ConfusionMatrix()
    cm.update(np.array([0, 0, 1, 1]), np.array([0, 1, 1, 1]))
    assert cm.matrix[0, 0] == 1
    assert cm.matrix[0, 1] == 1
    assert cm.matrix[1, 1] == 2
    assert cm.matrix.sum() == 4
    s = summarize(cm)
    assert s.iou[0] == 0.5
    assert np.isclose(s.iou[1], 2 / 3)
    assert np.isclose(s.mean_iou, 7 / 12)
    assert np.isclose(s.mean_acc, 0.75)
    assert np.isclose(s.all_acc, 0.75)
    assert s.present.tolist() == [True, True, False, False, False, False, False]


def test_perfect_prediction_all_ones():
    gt = np.arange(7).repeat(3)
    s = make_summary(gt, gt)
    assert (s.iou == 1.0).all() and (s.acc == 1.0).all()
    assert s.mean_iou == s.mean_acc == s.all_acc == 1.0


def test_diagonal_sums_to_n():
    rng = np.random.default_rng(0)
    gt = rng.integers(0, 7, 120)
    cm = ConfusionMatrix()
    cm.update(gt, gt)
    assert np.diag(cm.matrix).sum() == 120


def test_all_ignored_counts_only_ignored():
    cm = ConfusionMatrix()
    cm.update(np.full(9, 255), np.zeros(9, dtype=int))
    assert cm.matrix.sum() == 0
    assert cm.ignored == 9
    assert np.isnan(summarize(cm).mean_iou)


def test_out_of_range_rejected():
    cm = ConfusionMatrix()
    with pytest.raises(ShapeError):
        cm.update(np.array([0, 7]), np.array([0, 0]))
    with pytest.raises(ShapeError):
        cm.update(np.array([0, 0]), np.array([0, -1]))
    with pytest.raises(ShapeError):
        cm.update(np.array([0, 1]), np.array([0]))


# -- summarize vs brute force -----------------------------------------------------

@pytest.mark.parametrize("seed", [1, 2, 3, 4])
def test_random_case_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    gt = rng.integers(0, 7, 200)
    gt[rng.random(200) < 0.1] = 255
    pred = rng.integers(0, 7, 200)
    s = make_summary(gt, pred)
    iou, acc, present, miou, macc, allacc = brute_force_summary(gt, pred)
    assert s.present.tolist() == present
    for c in range(7):
        if present[c]:
            assert abs(s.iou[c] - float(iou[c])) < 1e-15
            assert abs(s.acc[c] - float(acc[c])) < 1e-15
        else:
            assert np.isnan(s.iou[c]) and np.isnan(s.acc[c])
    assert abs(s.mean_iou - float(miou)) < 1e-15
    assert abs(s.mean_acc - float(macc)) < 1e-15
    assert abs(s.all_acc - float(allacc)) < 1e-15


def test_iou_never_exceeds_acc():
    rng = np.random.default_rng(9)
    for _ in range(20):
        gt = rng.integers(0, 7, 50)
        pred = rng.integers(0, 7, 50)
        s = make_summary(gt, pred)
        ok = s.present & np.isfinite(s.acc)
        assert (s.iou[ok] <= s.acc[ok] + 1e-15).all()
        assert (s.iou[ok] >= 0).all() and (s.acc[ok] <= 1).all()


def test_update_additivity_and_merge():
    rng = np.random.default_rng(4)
    gt = rng.integers(0, 7, 300)
    pred = rng.integers(0, 7, 300)
    whole = ConfusionMatrix()
    whole.update(gt, pred)
    pieces = ConfusionMatrix()
    pieces.update(gt[:100], pred[:100])
    pieces.update(gt[100:], pred[100:])
    assert (whole.matrix == pieces.matrix).all()
    left = ConfusionMatrix()
    left.update(gt[:100], pred[:100])
    right = ConfusionMatrix()
    right.update(gt[100:], pred[100:])
    left.merge(right)
    assert (left.matrix == whole.matrix).all()


def test_present_but_unpredicted_class_scores_zero_acc():
    # class 2 appears only as a false positive
    s = make_summary(np.array([0, 0]), np.array([0, 2]))
    assert s.present[2]
    assert s.iou[2] == 0.0
    assert s.acc[2] == 0.0


# -- table rendering -----------------------------------------------------------------

def test_render_perfect_row_all_ones():
    gt = np.arange(7).repeat(2)
    table = render_table({"model": make_summary(gt, gt)})
    body = table.splitlines()[1]
    assert body.count("1.0000 / 1.0000") == 7
    assert body.rstrip().endswith("1.0000  1.0000  1.0000")


def test_render_four_decimal_format():
    s = MetricSummary(iou=np.full(7, 0.8295), acc=np.full(7, 0.9),
                      present=np.ones(7, bool), mean_iou=0.8295,
                      mean_acc=0.9, all_acc=0.91, ignored=0)
    table = render_table({"baseline": s})
    assert "0.8295" in table
    assert "0.9000" in table


def test_render_two_models_two_rows():
    gt = np.arange(7)
    table = render_table({"a": make_summary(gt, gt),
                          "b": make_summary(gt, (gt + 1) % 7)})
    lines = table.splitlines()
    assert len(lines) == 3
    assert lines[1].startswith("a") and lines[2].startswith("b")
    header = lines[0]
    assert header.index("artificial structures") < header.index("vehicle")
    assert header.rstrip().endswith("allAcc")


def test_render_absent_class_dash():
    s = make_summary(np.array([0, 0]), np.array([0, 0]))
    table = render_table({"m": s})
    assert "- / -" in table


def test_render_rejects_wrong_arity():
    s = make_summary(np.arange(7), np.arange(7))
    with pytest.raises(ShapeError):
        render_table({"m": s}, class_names=("a", "b"))


# -- error export -----------------------------------------------------------------------

def parse_ply(path):
    lines = path.read_text().splitlines()
    assert lines[0] == "ply"
    assert lines[1] == "format ascii 1.0"
    n = int(lines[2].split()[-1])
    body_start = lines.index("end_header") + 1
    records = [line.split() for line in lines[body_start:]]
    assert len(records) == n
    coords = np.array([[float(v) for v in r[:3]] for r in records])
    colors = np.array([[int(v) for v in r[3:]] for r in records])
    return coords, colors


def test_export_focus_class_definition(tmp_path):
    out = tmp_path / "err.ply"
    coords = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
    gt = np.array([2, 5, 2, 255])
    pred = np.array([5, 2, 2, 0])
    export_error_ply(out, coords, gt, pred, focus_class=2)
    parsed_coords, colors = parse_ply(out)
    assert np.allclose(parsed_coords, coords)
    assert tuple(colors[0]) == COLOR_MISS  # gt=2 predicted as 5
    assert tuple(colors[1]) == COLOR_FALSE_ALARM  # predicted 2, gt 5
    assert tuple(colors[2]) == COLOR_CORRECT
    assert tuple(colors[3]) == COLOR_IGNORED


def test_export_without_focus_all_mismatches_red(tmp_path):
    out = tmp_path / "err.ply"
    coords = np.zeros((3, 3))
    export_error_ply(out, coords, np.array([0, 1, 2]), np.array([0, 2, 1]))
    _, colors = parse_ply(out)
    assert tuple(colors[0]) == COLOR_CORRECT
    assert tuple(colors[1]) == COLOR_MISS
    assert tuple(colors[2]) == COLOR_MISS


def test_export_all_correct_all_white(tmp_path):
    out = tmp_path / "ok.ply"
    gt = np.arange(5) % 7
    export_error_ply(out, np.random.default_rng(0).normal(size=(5, 3)), gt, gt)
    _, colors = parse_ply(out)
    assert (colors == COLOR_CORRECT).all()


def test_export_shape_errors(tmp_path):
    with pytest.raises(ShapeError):
        export_error_ply(tmp_path / "x.ply", np.zeros((2, 2)),
                         np.zeros(2, int), np.zeros(2, int))
    with pytest.raises(ShapeError):
        export_error_ply(tmp_path / "x.ply", np.zeros((2, 3)),
                         np.zeros(3, int), np.zeros(2, int))
