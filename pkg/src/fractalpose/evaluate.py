"""Error metrics and report data for pose-estimation experiments.

Per-axis mean absolute error, cumulative error curves (fraction of probes
within a threshold) and mean error binned by ground-truth angle, plus the
two evaluation protocols: leave-one-subject-out and a seeded random split.
Angular error is plain |truth - predicted| without circular wrap; the
overall MAE is the arithmetic mean of the three axis MAEs.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .codec import EncoderConfig
from .gallery import (
    Gallery,
    GalleryEntry,
    Manifest,
    PoseLabel,
    build_gallery,
    split_leave_one_subject_out,
    split_random,
)
from .image import round_half_away

__all__ = [
    "AXES",
    "DEFAULT_THRESHOLDS",
    "Prediction",
    "EvalReport",
    "ProtocolResult",
    "mae",
    "cumulative_curve",
    "error_by_angle",
    "build_report",
    "run_protocol",
    "result_to_dict",
    "render_text",
    "curves_csv",
    "bins_csv",
]

AXES = ("yaw", "pitch", "roll")
DEFAULT_THRESHOLDS = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0)
DEFAULT_BIN_WIDTH = 5.0


@dataclass(frozen=True)
class Prediction:
    truth: PoseLabel
    predicted: PoseLabel
    source_id: str
    distance: int


def _abs_errors(preds: list[Prediction] | tuple[Prediction, ...], axis: str) -> np.ndarray:
    if not preds:
        raise ValueError("prediction list is empty")
    return np.array(
        [abs(p.truth.axis(axis) - p.predicted.axis(axis)) for p in preds], dtype=np.float64
    )


def mae(preds, axis: str) -> float:
    """Mean absolute error along one axis, in degrees.

    Errors are sorted before summation so the result is bit-identical under
    any permutation of the prediction list.
    """
    return float(np.sort(_abs_errors(preds, axis)).mean())


def cumulative_curve(preds, axis: str, thresholds=DEFAULT_THRESHOLDS) -> list[float]:
    """Fraction of predictions with |error| <= t for each threshold t.

    Threshold 0 uses exact equality of the label floats.
    """
    errs = _abs_errors(preds, axis)
    return [float(np.count_nonzero(errs <= t)) / errs.size for t in thresholds]


def error_by_angle(preds, axis: str, bin_width: float = DEFAULT_BIN_WIDTH):
    """Mean |error| grouped by ground-truth angle.

    Bins are centered on multiples of bin_width; empty bins are omitted.
    Returns [(bin_center, mean_abs_error, count), ...] sorted by center.
    """
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    errs = _abs_errors(preds, axis)
    truths = np.array([p.truth.axis(axis) for p in preds], dtype=np.float64)
    keys = round_half_away(truths / bin_width).astype(np.int64)
    out = []
    for k in np.unique(keys):
        sel = keys == k
        out.append((float(k) * bin_width, float(np.sort(errs[sel]).mean()), int(sel.sum())))
    return out


@dataclass(frozen=True)
class EvalReport:
    n: int
    mae_yaw: float
    mae_pitch: float
    mae_roll: float
    mae_overall: float
    thresholds: tuple[float, ...]
    cumulative: dict[str, tuple[float, ...]]
    by_angle: dict[str, tuple[tuple[float, float, int], ...]]

    def mae_axis(self, axis: str) -> float:
        return {"yaw": self.mae_yaw, "pitch": self.mae_pitch, "roll": self.mae_roll}[axis]


def build_report(preds, thresholds=DEFAULT_THRESHOLDS, bin_width: float = DEFAULT_BIN_WIDTH) -> EvalReport:
    maes = {axis: mae(preds, axis) for axis in AXES}
    return EvalReport(
        n=len(preds),
        mae_yaw=maes["yaw"],
        mae_pitch=maes["pitch"],
        mae_roll=maes["roll"],
        mae_overall=(maes["yaw"] + maes["pitch"] + maes["roll"]) / 3.0,
        thresholds=tuple(float(t) for t in thresholds),
        cumulative={a: tuple(cumulative_curve(preds, a, thresholds)) for a in AXES},
        by_angle={a: tuple(error_by_angle(preds, a, bin_width)) for a in AXES},
    )


@dataclass(frozen=True)
class ProtocolResult:
    protocol: str
    report: EvalReport | None
    per_subject: tuple[tuple[str, EvalReport], ...]
    mean_row: dict[str, float] | None
    predictions: tuple[Prediction, ...]
    warnings: tuple[str, ...] = ()


def _predict_against(
    model: list[GalleryEntry], probes: list[GalleryEntry], mode: str
) -> list[Prediction]:
    """Nearest-neighbor scan of probe vectors against model vectors; same
    distance and tie rules as gallery.query (lowest model index wins)."""
    if not model:
        raise ValueError("model split is empty")
    if not probes:
        raise ValueError("test split is empty")
    mat = np.stack([e.vector.symbols for e in model])
    preds = []
    for probe in probes:
        if mode == "symbol":
            dists = np.count_nonzero(mat != probe.vector.symbols[None, :], axis=1)
        elif mode == "bit":
            xor = (mat ^ probe.vector.symbols[None, :]).view(np.uint8)
            dists = np.unpackbits(xor, axis=1).sum(axis=1)
        else:
            raise ValueError(f"unknown hamming mode {mode!r}")
        i = int(np.argmin(dists))
        preds.append(
            Prediction(
                truth=probe.label,
                predicted=model[i].label,
                source_id=probe.source_id,
                distance=int(dists[i]),
            )
        )
    return preds


def _entries_for(manifest: Manifest, full: Gallery) -> list[GalleryEntry]:
    by_source = {e.source_id: e for e in full.entries}
    return [by_source[r.path] for r in manifest.rows]


def run_protocol(
    manifest: Manifest,
    cfg: EncoderConfig | None = None,
    protocol: str = "loo",
    model_fraction: float = 0.8,
    seed: int = 0,
    subject: str | None = None,
    hamming_mode: str = "symbol",
    thresholds=DEFAULT_THRESHOLDS,
) -> ProtocolResult:
    """Run an evaluation protocol over a labeled manifest.

    Every image is encoded exactly once; splits then operate on the stored
    vectors, which is equivalent to rebuilding a gallery per split because
    encoding is deterministic and per-image.
    """
    cfg = cfg or EncoderConfig()
    warnings: list[str] = []
    full = build_gallery(manifest, cfg)

    if protocol == "random":
        model_m, test_m = split_random(manifest, model_fraction, seed)
        preds = _predict_against(
            _entries_for(model_m, full), _entries_for(test_m, full), hamming_mode
        )
        if len(preds) < 5:
            warnings.append(f"test split has only {len(preds)} images")
        report = build_report(preds, thresholds)
        return ProtocolResult(
            protocol="random",
            report=report,
            per_subject=(),
            mean_row=None,
            predictions=tuple(preds),
            warnings=tuple(warnings),
        )

    if protocol != "loo":
        raise ValueError(f"unknown protocol {protocol!r}")

    if any(r.subject is None for r in manifest.rows):
        raise ValueError("leave-one-subject-out requires a subject for every row")
    subjects = manifest.subjects()
    if subject is not None:
        if subject not in subjects:
            raise ValueError(f"subject {subject!r} has no rows in the manifest")
        subjects = [subject]
    if len(manifest.subjects()) < 2:
        raise ValueError("leave-one-subject-out needs at least two subjects")

    per_subject = []
    all_preds: list[Prediction] = []
    for subj in subjects:
        model_m, test_m = split_leave_one_subject_out(manifest, subj)
        preds = _predict_against(
            _entries_for(model_m, full), _entries_for(test_m, full), hamming_mode
        )
        if len(preds) < 5:
            warnings.append(f"subject {subj!r} has only {len(preds)} test images")
        per_subject.append((subj, build_report(preds, thresholds)))
        all_preds.extend(preds)

    mean_row = {
        "yaw": sum(r.mae_yaw for _, r in per_subject) / len(per_subject),
        "pitch": sum(r.mae_pitch for _, r in per_subject) / len(per_subject),
        "roll": sum(r.mae_roll for _, r in per_subject) / len(per_subject),
        "overall": sum(r.mae_overall for _, r in per_subject) / len(per_subject),
    }
    return ProtocolResult(
        protocol="loo",
        report=None,
        per_subject=tuple(per_subject),
        mean_row=mean_row,
        predictions=tuple(all_preds),
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# report rendering


def _report_to_dict(r: EvalReport) -> dict:
    return {
        "n": r.n,
        "mae": {
            "yaw": r.mae_yaw,
            "pitch": r.mae_pitch,
            "roll": r.mae_roll,
            "overall": r.mae_overall,
        },
        "cumulative": {
            "thresholds": list(r.thresholds),
            **{a: list(r.cumulative[a]) for a in AXES},
        },
        "by_angle": {
            a: [
                {"center": c, "mean_abs_error": e, "count": n}
                for c, e, n in r.by_angle[a]
            ]
            for a in AXES
        },
    }


def result_to_dict(res: ProtocolResult) -> dict:
    out: dict = {"protocol": res.protocol, "warnings": list(res.warnings)}
    if res.protocol == "random":
        out["report"] = _report_to_dict(res.report)
    else:
        out["subjects"] = [
            {"subject": s, **_report_to_dict(r)} for s, r in res.per_subject
        ]
        out["mean"] = dict(res.mean_row)
    return out


def result_to_json(res: ProtocolResult) -> str:
    return json.dumps(result_to_dict(res), indent=2, sort_keys=True) + "\n"


def _table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


def render_text(res: ProtocolResult) -> str:
    rows = [["Subset", "Yaw", "Pitch", "Roll", "overall MAE"]]
    if res.protocol == "random":
        r = res.report
        rows.append(
            ["random", f"{r.mae_yaw:.2f}", f"{r.mae_pitch:.2f}", f"{r.mae_roll:.2f}", f"{r.mae_overall:.2f}"]
        )
    else:
        for s, r in res.per_subject:
            rows.append(
                [s, f"{r.mae_yaw:.2f}", f"{r.mae_pitch:.2f}", f"{r.mae_roll:.2f}", f"{r.mae_overall:.2f}"]
            )
        m = res.mean_row
        rows.append(
            ["mean", f"{m['yaw']:.2f}", f"{m['pitch']:.2f}", f"{m['roll']:.2f}", f"{m['overall']:.2f}"]
        )
    return _table(rows)


def _pooled_report(res: ProtocolResult) -> EvalReport:
    return res.report if res.report is not None else build_report(list(res.predictions))


def curves_csv(res: ProtocolResult) -> str:
    """Cumulative curves over all test predictions, as axis,threshold,fraction."""
    r = _pooled_report(res)
    buf = io.StringIO()
    buf.write("axis,threshold,fraction\n")
    for a in AXES:
        for t, f in zip(r.thresholds, r.cumulative[a]):
            buf.write(f"{a},{t:g},{f!r}\n")
    return buf.getvalue()


def bins_csv(res: ProtocolResult) -> str:
    """Error-by-angle histogram data, as axis,bin_center,mean_abs_error,count."""
    r = _pooled_report(res)
    buf = io.StringIO()
    buf.write("axis,bin_center,mean_abs_error,count\n")
    for a in AXES:
        for c, e, n in r.by_angle[a]:
            buf.write(f"{a},{c:g},{e!r},{n}\n")
    return buf.getvalue()
