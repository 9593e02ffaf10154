"""Metrics: ACC@k, macro precision/recall/F1, activity-group breakdowns.

The macro class set is the set of users appearing in the TEST ground truth;
users never tested contribute no term.  Zero-division conventions: a class
never predicted has precision 0, and F1 is 0 when P + R = 0.
"""

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError

GROUP_NAMES = ("active", "normal", "inactive")


@dataclass
class PredictionMatrix:
    scores: np.ndarray  # (n, Q)
    truth: np.ndarray  # (n,) labels in [0, Q)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.truth = np.asarray(self.truth)
        if self.scores.ndim != 2 or self.scores.shape[0] != self.truth.shape[0]:
            raise EvaluationError("scores/truth shape mismatch")
        if self.scores.shape[1] < 2:
            raise EvaluationError("need at least 2 classes")
        if self.truth.size and (self.truth.min() < 0 or self.truth.max() >= self.scores.shape[1]):
            raise EvaluationError("truth label outside [0, Q)")


def top_k_indices(scores_row, k):
    """Indices of the k highest scores, ties broken by lower class index."""
    order = np.argsort(-scores_row, kind="stable")
    return order[:k]


def acc_at_k(pred, k):
    """Fraction of rows whose truth is among the top-k scored classes."""
    n, q = pred.scores.shape
    if not 1 <= k <= q:
        raise EvaluationError(f"k={k} outside [1, {q}]")
    hits = 0
    for i in range(n):
        if pred.truth[i] in top_k_indices(pred.scores[i], k):
            hits += 1
    return hits / n


def per_class_prf(pred):
    """{class: (precision, recall, f1)} over classes present in the truth."""
    predicted = np.argmax(pred.scores, axis=1)
    classes = sorted(set(int(c) for c in pred.truth))
    out = {}
    for c in classes:
        tp = int(np.sum((predicted == c) & (pred.truth == c)))
        fp = int(np.sum((predicted == c) & (pred.truth != c)))
        fn = int(np.sum((predicted != c) & (pred.truth == c)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        out[c] = (p, r, f1)
    return out


def macro_prf(pred):
    """Unweighted means of per-class precision, recall and F1."""
    per_class = per_class_prf(pred)
    ps, rs, f1s = zip(*per_class.values())
    return float(np.mean(ps)), float(np.mean(rs)), float(np.mean(f1s))


def activity_groups(train_counts):
    """Split classes into active/normal/inactive thirds by training count.

    ``train_counts[c]`` is class c's (pre-balancing) training trajectory
    count.  Classes sort by count descending, ties by index; the top 30%
    (floor) are active, the bottom 30% (floor) inactive.
    """
    counts = np.asarray(train_counts)
    n = counts.shape[0]
    if n < 4:
        raise EvaluationError(f"need at least 4 users to form groups, got {n}")
    order = sorted(range(n), key=lambda c: (-counts[c], c))
    n_edge = int(np.floor(0.3 * n))
    return {
        "active": sorted(order[:n_edge]),
        "normal": sorted(order[n_edge : n - n_edge]),
        "inactive": sorted(order[n - n_edge :]),
    }


def cold_start_report(train_counts, pred):
    """Macro-F1 per activity group.

    Group Macro-F1 averages the globally computed per-class F1 over the
    group's classes that appear in the test truth; a group with no tested
    classes reports 0.
    """
    groups = activity_groups(train_counts)
    per_class = per_class_prf(pred)
    report = {}
    for name in GROUP_NAMES:
        f1s = [per_class[c][2] for c in groups[name] if c in per_class]
        report[name] = float(np.mean(f1s)) if f1s else 0.0
    return report


@dataclass
class EvalReport:
    acc: dict  # k -> value
    macro_p: float
    macro_r: float
    macro_f1: float
    per_group: dict  # group name -> Macro-F1
    variant_id: str

    def lines(self):
        """Machine-readable metric rows: (metric, group, value)."""
        rows = [(f"acc@{k}", "all", v) for k, v in sorted(self.acc.items())]
        rows += [
            ("macro_p", "all", self.macro_p),
            ("macro_r", "all", self.macro_r),
            ("macro_f1", "all", self.macro_f1),
        ]
        rows += [("macro_f1", g, self.per_group[g]) for g in GROUP_NAMES]
        return rows


def evaluate_predictions(pred, train_counts, variant_id="full", ks=(1, 5)):
    """Assemble the full report for one prediction matrix."""
    q = pred.scores.shape[1]
    acc = {k: acc_at_k(pred, min(k, q)) for k in ks}
    p, r, f1 = macro_prf(pred)
    return EvalReport(
        acc=acc,
        macro_p=p,
        macro_r=r,
        macro_f1=f1,
        per_group=cold_start_report(train_counts, pred),
        variant_id=variant_id.upper(),
    )


def write_report(report, tsv_path, txt_path):
    """Machine-readable TSV and aligned human table with identical values."""
    rows = report.lines()
    with open(tsv_path, "w", encoding="utf-8") as fh:
        fh.write(f"# variant={report.variant_id}\n")
        for metric, group, value in rows:
            fh.write(f"{metric}\t{group}\t{value:.4f}\n")
    width = max(len(m) for m, _, _ in rows)
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(f"variant: {report.variant_id}\n")
        for metric, group, value in rows:
            fh.write(f"{metric:<{width}}  {group:<8}  {value:.4f}\n")


def read_report_tsv(path):
    """Parse a machine-readable report back into {(metric, group): value}."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#"):
                continue
            metric, group, value = line.rstrip("\n").split("\t")
            out[(metric, group)] = float(value)
    return out
