"""Readers and writers for run artifacts.

All numeric output is plain text: JSON for structured state (floats written
with full round-trip precision) and CSV for anything meant to be plotted.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .annealer import AnnealReport
from .codebook import (
    DecoderTable,
    RandomizedEncoder,
    decoder_from_dict,
    decoder_to_dict,
    encoder_from_dict,
    encoder_to_dict,
)

ANNEAL_COLUMNS = ["T", "D", "P1", "P2", "H", "J", "F", "clusters1", "clusters2", "inner_iters"]
SWEEP_COLUMNS = ["lambda1", "lambda2", "P1", "P2", "CSNR_dB", "SNR_dB", "method", "converged"]


def _ensure_parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_json(path, payload: dict):
    path = _ensure_parent(path)
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_json(path) -> dict:
    with open(path) as handle:
        return json.load(handle)


def mapping_payload(
    values1,
    values2,
    decoder: DecoderTable,
    encoder1: RandomizedEncoder | None = None,
    encoder2: RandomizedEncoder | None = None,
    x_grid_1=None,
    x_grid_2=None,
) -> dict:
    """Mapping dump: affine state when present, operative grid values always.

    ``final_values`` is the map the system actually transmits with (for the
    annealer this includes the zero-temperature polish, so it can differ
    from hardening the affine models).
    """
    encoders = []
    for enc, values, grid in ((encoder1, values1, x_grid_1), (encoder2, values2, x_grid_2)):
        if enc is not None:
            entry = encoder_to_dict(enc)
        else:
            entry = {
                "models": [],
                "assoc": [],
                "x_grid": np.asarray(grid, float).tolist(),
                "hardened_values": np.asarray(values, float).tolist(),
                "hardened_model_index": [],
            }
        entry["final_values"] = np.asarray(values, float).tolist()
        encoders.append(entry)
    return {"encoders": encoders, "decoder": decoder_to_dict(decoder)}


def write_mapping(json_path, csv_path, payload: dict):
    write_json(json_path, payload)
    enc1, enc2 = payload["encoders"]
    x1 = enc1["x_grid"]
    x2 = enc2["x_grid"]
    v1 = enc1["final_values"]
    v2 = enc2["final_values"]
    csv_path = _ensure_parent(csv_path)
    with open(csv_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        if np.array_equal(x1, x2):
            writer.writerow(["x", "g1", "g2"])
            for x, a, b in zip(x1, v1, v2):
                writer.writerow([repr(float(x)), repr(float(a)), repr(float(b))])
        else:
            writer.writerow(["x1", "g1", "x2", "g2"])
            for x, a, y, b in zip(x1, v1, x2, v2):
                writer.writerow([repr(float(x)), repr(float(a)), repr(float(y)), repr(float(b))])


def load_mapping(path):
    """Inverse of :func:`write_mapping`'s JSON half."""
    payload = read_json(path)
    decoder = decoder_from_dict(payload["decoder"])
    encoders = []
    finals = []
    for entry in payload["encoders"]:
        if entry["models"]:
            encoders.append(encoder_from_dict(entry))
        else:
            encoders.append(None)
        finals.append(np.array(entry["final_values"], dtype=float))
    grids = [np.array(entry["x_grid"], dtype=float) for entry in payload["encoders"]]
    return {
        "encoders": encoders,
        "values": finals,
        "x_grids": grids,
        "decoder": decoder,
        "payload": payload,
    }


def write_anneal_csv(path, report: AnnealReport):
    path = _ensure_parent(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(ANNEAL_COLUMNS)
        for r in report.records:
            writer.writerow(
                [
                    repr(float(r.temperature)),
                    repr(float(r.distortion)),
                    repr(float(r.power1)),
                    repr(float(r.power2)),
                    repr(float(r.entropy)),
                    repr(float(r.lagrangian)),
                    repr(float(r.free_energy)),
                    int(r.clusters1),
                    int(r.clusters2),
                    int(r.inner_iters),
                ]
            )


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as handle:
        return list(csv.DictReader(handle))


def write_sweep_csv(path, rows: list[dict]):
    path = _ensure_parent(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    repr(float(row["lambda1"])),
                    repr(float(row["lambda2"])),
                    repr(float(row["P1"])),
                    repr(float(row["P2"])),
                    repr(float(row["CSNR_dB"])),
                    repr(float(row["SNR_dB"])),
                    row["method"],
                    bool(row.get("converged", True)),
                ]
            )
