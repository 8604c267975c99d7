"""Error metrics, per-horizon reports and the ablation suite."""
import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import kinematics as kin
from .data import default_horizons_ms, samples_from_sequences
from .errors import ContractError, IngestionError

METRICS = ("mae", "mse", "rmse", "n")
MODEL_NAME = "model"
BASELINE_NAME = "zero_velocity"


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ContractError(f"prediction shape {pred.shape} does not match truth {truth.shape}")
    if pred.size == 0:
        raise ContractError("cannot score an empty prediction")
    return pred, truth


def mae(pred, truth):
    """Mean absolute error over every sample and channel."""
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def mse(pred, truth):
    pred, truth = _pair(pred, truth)
    return float(np.mean((pred - truth) ** 2))


def rmse(pred, truth):
    return float(np.sqrt(mse(pred, truth)))


@dataclass
class EvalReport:
    """Rows of ``predictor x horizon`` with MAE, MSE, RMSE and sample count."""

    rows: list = field(default_factory=list)
    unit: str = "degrees"

    def add(self, predictor, horizon_ms, pred, truth):
        self.rows.append({"predictor": predictor, "horizon_ms": float(horizon_ms),
                          "mae": mae(pred, truth), "mse": mse(pred, truth),
                          "rmse": rmse(pred, truth), "n": int(np.shape(truth)[0])})

    @property
    def predictors(self):
        return list(dict.fromkeys(r["predictor"] for r in self.rows))

    @property
    def horizons_ms(self):
        return sorted({r["horizon_ms"] for r in self.rows})

    def get(self, predictor, horizon_ms, metric="mae"):
        for r in self.rows:
            if r["predictor"] == predictor and r["horizon_ms"] == float(horizon_ms):
                return r[metric]
        raise KeyError((predictor, horizon_ms))

    def series(self, predictor, metric="mae"):
        """Metric values in horizon order."""
        return np.array([self.get(predictor, h, metric) for h in self.horizons_ms])

    def improvement(self, lo_ms, hi_ms, predictor=MODEL_NAME, baseline=BASELINE_NAME):
        """Relative MAE reduction over the baseline, averaged over ``lo <= t <= hi``."""
        hs = [h for h in self.horizons_ms if lo_ms <= h <= hi_ms]
        if not hs:
            raise ContractError(f"no horizons between {lo_ms} and {hi_ms} ms")
        m = np.mean([self.get(predictor, h) for h in hs])
        b = np.mean([self.get(baseline, h) for h in hs])
        return float(1.0 - m / b)

    def to_csv(self, path):
        """Table layout: one row per predictor and metric, one column per horizon."""
        hs = self.horizons_ms
        with open(path, "w", newline="") as fh:
            fh.write(f"# unit: {self.unit}\n")
            w = csv.writer(fh)
            w.writerow(["predictor", "metric"] + [f"{h:g}" for h in hs])
            for p in self.predictors:
                for m in METRICS:
                    w.writerow([p, m] + [repr(self.get(p, h, m)) for h in hs])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            first = fh.readline()
            if not first.startswith("# unit:"):
                raise IngestionError(f"{path}: missing '# unit:' line")
            unit = first.split(":", 1)[1].strip()
            reader = csv.reader(fh)
            header = next(reader)
            hs = [float(h) for h in header[2:]]
            cells = {}
            for row in reader:
                if row:
                    cells[(row[0], row[1])] = row[2:]
        rows = []
        for (p, m) in cells:
            if m != "mae":
                continue
            for k, h in enumerate(hs):
                rows.append({"predictor": p, "horizon_ms": h,
                             **{mm: float(cells[(p, mm)][k]) for mm in METRICS[:3]},
                             "n": int(float(cells[(p, "n")][k]))})
        return cls(rows, unit)

    def format(self, metric="mae", digits=3):
        """Plain-text table for terminals and logs."""
        hs = self.horizons_ms
        width = max(len(p) for p in self.predictors) + 2
        lines = [f"{metric.upper()} ({self.unit})".ljust(width) + "".join(f"{h:>9g}" for h in hs)]
        for p in self.predictors:
            lines.append(p.ljust(width) + "".join(f"{self.get(p, h, metric):>9.{digits}f}" for h in hs))
        return "\n".join(lines)


def _as_model(model):
    if isinstance(model, (str, Path)):
        from .checkpoint import load_model
        return load_model(model)[0]
    return model


def evaluate(model, sequences, horizons_ms=None, stride=1, name=MODEL_NAME, chunk=64):
    """Score a model and the zero-velocity baseline on every window of ``sequences``.

    ``model`` may be a :class:`~fingermotion.model.Model` or a checkpoint path.
    Horizons default to the training grid; any whole-frame horizon is allowed.
    """
    model = _as_model(model)
    if not sequences:
        raise ContractError("no sequences to evaluate")
    t_s = sequences[0].t_s
    if horizons_ms is None:
        horizons_ms = default_horizons_ms(t_s)
    horizons_ms = tuple(float(h) for h in horizons_ms)
    samples = samples_from_sequences(sequences, horizons_ms, stride=stride,
                                     window=model.cfg.window, sigma=model.cfg.gauss_sigma)
    if len(samples) == 0:
        raise ContractError("sequences are too short to hold a single evaluation window")
    return evaluate_samples(model, samples, horizons_ms, name=name, chunk=chunk)


def evaluate_samples(model, samples, horizons_ms, name=MODEL_NAME, chunk=64):
    pred = model.predict(samples.windows, np.asarray(horizons_ms) / 1000.0, chunk=chunk)
    last = kin.zero_velocity_predict(samples.windows, axis=1)
    report = EvalReport(unit=samples.unit)
    for k, h in enumerate(horizons_ms):
        report.add(name, h, pred[k], samples.targets[h])
    for h in horizons_ms:
        report.add(BASELINE_NAME, h, last, samples.targets[h])
    return report


ABLATIONS = {
    "full": {},
    "no_kfe": {"use_kfe": False},
    "no_gcn": {"use_gcn": False},
    "no_kfe_no_gcn": {"use_kfe": False, "use_gcn": False},
}


def ablation_suite(splits, model_cfg, train_cfg, variants=tuple(ABLATIONS), horizons_ms=None,
                   stride=1, workdir=None):
    """Train and test each variant under the same seed and budget.

    Returns ``{variant: (EvalReport, TrainResult)}``; every report is built
    from the same test windows.
    """
    from .trainer import train

    out = {}
    for v in variants:
        if v not in ABLATIONS:
            raise ContractError(f"unknown ablation variant {v!r}; choose from {sorted(ABLATIONS)}")
        cfg = replace(model_cfg, **ABLATIONS[v])
        ckpt = None if workdir is None else Path(workdir) / f"{v}.ckpt"
        result = train(splits, cfg, train_cfg, out=ckpt)
        report = evaluate(result.model, splits["test"], horizons_ms, stride=stride, name=v)
        out[v] = (report, result)
    return out
