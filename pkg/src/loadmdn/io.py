"""On-disk artifacts: datasets, model parameters, ensemble manifests, histories.

Everything is plain text (CSV/JSON) with floats written by ``repr`` so a
reload is exact and reruns are byte-identical.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import pandas as pd

from .data import SPLITS, SupervisedSet
from .ensemble import Ensemble, as_ensemble
from .scaling import Scaler
from .training import ModelSpec, TrainedModel

DATASET_SCHEMA_VERSION = 1
DATASET_CSV = "dataset.csv"
DATASET_META = "dataset.json"
PARAMS_FORMAT = "loadmdn-params"
PARAMS_VERSION = 1
MANIFEST = "manifest.json"
_TS_FORMAT = "%Y-%m-%dT%H:%M:%S"


class ArtifactError(ValueError):
    pass


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def _load_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: malformed JSON ({exc})") from exc


def format_timestamps(ts) -> list[str]:
    return list(pd.DatetimeIndex(np.asarray(ts, dtype="datetime64[ns]")).strftime(_TS_FORMAT))


# --- datasets ---------------------------------------------------------------

def write_dataset(d: SupervisedSet, directory) -> Path:
    """Write ``dataset.csv`` (schema header, one row per sample) and ``dataset.json`` (scalers)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / DATASET_CSV
    split = d.split if d.split is not None else np.full(len(d), "")
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema_version={DATASET_SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "split", *d.feature_names, "kwh"])
        for ts, tag, x, y in zip(format_timestamps(d.timestamps), split, d.inputs, d.targets):
            w.writerow([ts, tag, *(repr(float(v)) for v in x), repr(float(y))])
    meta = {"schema_version": DATASET_SCHEMA_VERSION, "household_id": d.household_id,
            "feature_names": list(d.feature_names), "n_samples": len(d),
            "x_scaler": d.x_scaler.to_dict() if d.x_scaler else None,
            "y_scaler": d.y_scaler.to_dict() if d.y_scaler else None}
    _dump_json(meta, directory / DATASET_META)
    return path


def _dataset_csv(path) -> Path:
    path = Path(path)
    if path.is_dir():
        path = path / DATASET_CSV
    if not path.exists():
        raise FileNotFoundError(f"dataset artifact not found: {path}")
    return path


def read_dataset(path) -> SupervisedSet:
    """Load an artifact written by :func:`write_dataset`; ``path`` is the CSV or its directory."""
    path = _dataset_csv(path)
    with open(path) as fh:
        header = fh.readline().strip()
    expected = f"# schema_version={DATASET_SCHEMA_VERSION}"
    if header != expected:
        raise ArtifactError(f"{path}: unsupported dataset schema {header!r} (expected {expected!r})")
    frame = pd.read_csv(path, skiprows=1, dtype={"split": str}, keep_default_na=False, float_precision="round_trip")
    meta_path = path.with_name(DATASET_META)
    meta = _load_json(meta_path) if meta_path.exists() else {}
    if meta and meta.get("schema_version") != DATASET_SCHEMA_VERSION:
        raise ArtifactError(f"{meta_path}: schema_version {meta.get('schema_version')} does not match the CSV")
    names = [c for c in frame.columns if c not in ("timestamp", "split", "kwh")]
    split = frame["split"].to_numpy(dtype=object)
    if np.all(split == ""):
        split = None
    elif not set(split) <= set(SPLITS):
        raise ArtifactError(f"{path}: unknown split tags {sorted(set(split) - set(SPLITS))}")
    else:
        split = split.astype(str)
    scalers = [Scaler.from_dict(meta[k]) if meta.get(k) else None for k in ("x_scaler", "y_scaler")]
    return SupervisedSet(frame[names].to_numpy(dtype=np.float64), frame["kwh"].to_numpy(dtype=np.float64),
                         pd.to_datetime(frame["timestamp"]).to_numpy(dtype="datetime64[ns]"), split,
                         scalers[0], scalers[1], names, str(meta.get("household_id", "")))


# --- parameters -------------------------------------------------------------

def params_document(model: TrainedModel) -> dict:
    tensors = [{"name": k, "shape": list(v.shape), "data": np.asarray(v, dtype=np.float64).ravel().tolist()}
               for k, v in sorted(model.params.items())]
    return {"format": PARAMS_FORMAT, "version": PARAMS_VERSION, "spec": model.spec.to_dict(), "tensors": tensors}


def write_params(model: TrainedModel, path) -> None:
    _dump_json(params_document(model), Path(path))


def read_params(path) -> tuple[ModelSpec, dict[str, np.ndarray]]:
    doc = _load_json(Path(path))
    if doc.get("format") != PARAMS_FORMAT or doc.get("version") != PARAMS_VERSION:
        raise ArtifactError(f"{path}: not a {PARAMS_FORMAT} v{PARAMS_VERSION} file")
    params = {}
    for t in doc["tensors"]:
        data = np.asarray(t["data"], dtype=np.float64)
        if data.size != int(np.prod(t["shape"])):
            raise ArtifactError(f"{path}: tensor {t['name']} has {data.size} values for shape {t['shape']}")
        params[t["name"]] = data.reshape(t["shape"])
    return ModelSpec.from_dict(doc["spec"]), params


def write_history(history, path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch\ttrain_loss\tval_loss\n")
        for epoch, tr, va in history:
            fh.write(f"{int(epoch)}\t{float(tr)!r}\t{float(va)!r}\n")


def read_history(path) -> list[tuple[int, float, float]]:
    with open(path) as fh:
        lines = fh.read().splitlines()[1:]
    return [(int(e), float(a), float(b)) for e, a, b in (ln.split("\t") for ln in lines if ln)]


# --- models -----------------------------------------------------------------

def save_model(model, directory, variant: str = "") -> Path:
    """Write one params file and history per member plus ``manifest.json``."""
    e = as_ensemble(model)
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    members = []
    for i, m in enumerate(e.members):
        params_file, history_file = f"member_{i}.params.json", f"member_{i}.history.tsv"
        write_params(m, directory / params_file)
        write_history(m.history, directory / history_file)
        members.append({"file": params_file, "history": history_file, "seed": m.seed,
                        "bayesian": m.spec.bayesian, "sigma_y": m.sigma_y, "best_epoch": m.best_epoch})
    manifest = {"format": PARAMS_FORMAT, "version": PARAMS_VERSION, "variant": variant or e.spec.variant,
                "dataset_schema_version": DATASET_SCHEMA_VERSION, "spec": e.spec.to_dict(),
                "n_inputs": e.members[0].n_inputs,
                "x_scaler": e.x_scaler.to_dict(), "y_scaler": e.y_scaler.to_dict(), "members": members}
    path = directory / MANIFEST
    _dump_json(manifest, path)
    return path


def read_manifest(directory) -> dict:
    path = Path(directory)
    if path.is_dir():
        path = path / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"model manifest not found: {path}")
    doc = _load_json(path)
    if doc.get("format") != PARAMS_FORMAT or doc.get("version") != PARAMS_VERSION:
        raise ArtifactError(f"{path}: not a {PARAMS_FORMAT} v{PARAMS_VERSION} manifest")
    return doc


def load_model(directory) -> Ensemble:
    directory = Path(directory)
    base = directory if directory.is_dir() else directory.parent
    doc = read_manifest(directory)
    xs, ys = Scaler.from_dict(doc["x_scaler"]), Scaler.from_dict(doc["y_scaler"])
    members = []
    for entry in doc["members"]:
        spec, params = read_params(base / entry["file"])
        hist_path = base / entry["history"]
        history = read_history(hist_path) if hist_path.exists() else []
        members.append(TrainedModel(spec, params, xs, ys, entry["sigma_y"], history, entry["seed"],
                                    entry["best_epoch"]))
    return Ensemble(members)


def check_compatible(manifest: dict, d: SupervisedSet) -> None:
    """Raise ArtifactError when a model artifact cannot score dataset ``d``."""
    version = manifest.get("dataset_schema_version")
    if version != DATASET_SCHEMA_VERSION:
        raise ArtifactError(f"model was built for dataset schema {version}, dataset is {DATASET_SCHEMA_VERSION}")
    if manifest.get("n_inputs") != d.n_features:
        raise ArtifactError(f"model expects {manifest.get('n_inputs')} features, dataset has {d.n_features}")
