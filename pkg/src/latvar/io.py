"""File formats: dataset CSV, ground-truth / checkpoint / metrics / report JSON.

All JSON documents carry format_version 1, serialize matrices as row-major
nested arrays, and are written with sorted keys so identical inputs produce
byte-identical files.  CSV values use the shortest round-trip decimal form,
so a write/read cycle reproduces every float bit-exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .model import (
    CausalParams,
    GmmNoiseParams,
    GroundTruth,
    ModelDims,
    NoiseSpec,
    TimeSeriesDataset,
)
from .vi import FittedModel

FORMAT_VERSION = 1


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_json(obj))


def read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _listify(arr) -> list:
    return np.asarray(arr, dtype=float).tolist()


def _check_version(doc, path, kind):
    if doc.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    if doc.get("kind") != kind:
        raise ConfigError(f"{path}: expected kind {kind!r}, found {doc.get('kind')!r}")


# -- dataset CSV -----------------------------------------------------------

def write_dataset_csv(dataset: TimeSeriesDataset, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(dataset.names)
        for row in dataset.X:
            writer.writerow([repr(float(v)) for v in row])


def read_dataset_csv(path) -> TimeSeriesDataset:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty dataset file") from None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise ConfigError(
                    f"{path}:{lineno}: expected {len(names)} columns, found {len(row)}"
                )
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    if len(rows) < 2:
        raise ConfigError(f"{path}: need at least 2 data rows, found {len(rows)}")
    return TimeSeriesDataset(X=np.asarray(rows), names=list(names))


# -- ground truth ------------------------------------------------------------

def _gmm_to_doc(g: GmmNoiseParams | None):
    if g is None:
        return None
    return {"pi": _listify(g.pi), "mu": _listify(g.mu), "sigma": _listify(g.sigma)}


def _gmm_from_doc(doc) -> GmmNoiseParams | None:
    if doc is None:
        return None
    return GmmNoiseParams(
        pi=np.asarray(doc["pi"]), mu=np.asarray(doc["mu"]), sigma=np.asarray(doc["sigma"])
    )


def truth_to_doc(gt: GroundTruth, meta: dict | None = None) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "kind": "ground_truth",
        "dims": {"m": gt.dims.m, "n": gt.dims.n, "T": gt.dims.T, "C": gt.dims.C},
        "A": _listify(gt.params.A),
        "W": _listify(gt.params.W),
        "Z": _listify(gt.Z) if gt.Z is not None else None,
        "noise": {
            "family": gt.noise.family,
            "observed": _gmm_to_doc(gt.noise.observed),
            "latent": _gmm_to_doc(gt.noise.latent),
        },
        "stationarity_rescale": float(gt.rescale),
        "meta": meta or {},
    }


def truth_from_doc(doc, path="<doc>") -> GroundTruth:
    _check_version(doc, path, "ground_truth")
    d = doc["dims"]
    dims = ModelDims(m=int(d["m"]), n=int(d["n"]), T=int(d["T"]), C=int(d["C"]))
    noise = NoiseSpec(
        family=doc["noise"]["family"],
        observed=_gmm_from_doc(doc["noise"]["observed"]),
        latent=_gmm_from_doc(doc["noise"]["latent"]),
    )
    Z = np.asarray(doc["Z"]) if doc.get("Z") is not None else None
    return GroundTruth(
        params=CausalParams(A=np.asarray(doc["A"]), W=np.asarray(doc["W"])),
        noise=noise,
        dims=dims,
        Z=Z,
        rescale=float(doc.get("stationarity_rescale", 1.0)),
    )


def write_truth(gt: GroundTruth, path, meta: dict | None = None):
    write_json(path, truth_to_doc(gt, meta))


def read_truth(path) -> GroundTruth:
    return truth_from_doc(read_json(path), path)


# -- checkpoints -------------------------------------------------------------

@dataclass
class Checkpoint:
    """Constrained posterior values plus the training record, as persisted."""

    dims: ModelDims
    edge_prob: np.ndarray
    w_mean: np.ndarray
    w_std: np.ndarray
    z_mean: np.ndarray
    z_scale: np.ndarray
    noise_x: GmmNoiseParams
    noise_z: GmmNoiseParams | None
    objective_trace: list[float]
    epochs_run: int
    train_config: dict

    @classmethod
    def from_fitted(cls, fitted: FittedModel) -> "Checkpoint":
        state = fitted.state
        cfg = fitted.config
        return cls(
            dims=fitted.dims,
            edge_prob=state.edge_prob_full(),
            w_mean=state.w_mean_full(),
            w_std=state.w_std_full(),
            z_mean=state.z_mean(),
            z_scale=state.z_scale(),
            noise_x=state.noise_x(),
            noise_z=state.noise_z(),
            objective_trace=list(fitted.trace),
            epochs_run=fitted.epochs_run,
            train_config={
                "lam": cfg.lam,
                "lam0_start": cfg.lam0_start,
                "lam0_end": cfg.lam0_end,
                "lam0_decay": cfg.lam0_decay,
                "mc_samples": cfg.mc_samples,
                "learning_rate": cfg.learning_rate,
                "max_epochs": cfg.max_epochs,
                "patience": cfg.patience,
                "grad_check": cfg.grad_check,
                "seed": cfg.seed,
                "objective_mode": cfg.objective_mode,
            },
        )

    def to_doc(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "checkpoint",
            "dims": {"m": self.dims.m, "n": self.dims.n, "T": self.dims.T, "C": self.dims.C},
            "edge_prob": _listify(self.edge_prob),
            "w_mean": _listify(self.w_mean),
            "w_std": _listify(self.w_std),
            "z_mean": _listify(self.z_mean),
            "z_scale": _listify(self.z_scale),
            "noise_observed": _gmm_to_doc(self.noise_x),
            "noise_latent": _gmm_to_doc(self.noise_z),
            "objective_trace": [float(v) for v in self.objective_trace],
            "epochs_run": int(self.epochs_run),
            "train_config": self.train_config,
        }


def checkpoint_from_doc(doc, path="<doc>") -> Checkpoint:
    _check_version(doc, path, "checkpoint")
    d = doc["dims"]
    return Checkpoint(
        dims=ModelDims(m=int(d["m"]), n=int(d["n"]), T=int(d["T"]), C=int(d["C"])),
        edge_prob=np.asarray(doc["edge_prob"], dtype=float),
        w_mean=np.asarray(doc["w_mean"], dtype=float),
        w_std=np.asarray(doc["w_std"], dtype=float),
        z_mean=np.asarray(doc["z_mean"], dtype=float),
        z_scale=np.asarray(doc["z_scale"], dtype=float),
        noise_x=_gmm_from_doc(doc["noise_observed"]),
        noise_z=_gmm_from_doc(doc["noise_latent"]),
        objective_trace=[float(v) for v in doc["objective_trace"]],
        epochs_run=int(doc["epochs_run"]),
        train_config=dict(doc["train_config"]),
    )


def write_checkpoint(ckpt: Checkpoint, path):
    write_json(path, ckpt.to_doc())


def read_checkpoint(path) -> Checkpoint:
    return checkpoint_from_doc(read_json(path), path)


# -- metrics -----------------------------------------------------------------

def metrics_to_doc(report, tau: float, latent_match: dict | None = None,
                   scope: str = "observed-observed adjacency block only") -> dict:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": "metrics",
        "scope": scope,
        "tau": float(tau),
        "precision": float(report.precision),
        "recall": float(report.recall),
        "f1": float(report.f1),
        "true_positives": int(report.true_positives),
        "predicted_edges": int(report.predicted_edges),
        "actual_edges": int(report.actual_edges),
        "latent_match": latent_match,
    }
    if report.precision_sd is not None:
        doc["precision_sd"] = float(report.precision_sd)
        doc["recall_sd"] = float(report.recall_sd)
        doc["f1_sd"] = float(report.f1_sd)
    return doc
