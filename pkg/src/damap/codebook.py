"""Encoder and decoder representations.

Encoders are piecewise-affine: a bank of local affine models plus a
per-grid-node association-probability table.  Decoders are estimate tables
on the channel-output lattice, read back through bilinear interpolation
with edge clamping.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import OutputGrid


@dataclass(frozen=True)
class AffineModel:
    """One local model: x -> a*x + b."""

    a: float
    b: float

    def __call__(self, x):
        return self.a * x + self.b


@dataclass(frozen=True)
class RandomizedEncoder:
    """Affine model bank with per-node association probabilities.

    ``assoc[i, k]`` is the probability that grid node ``x_grid[i]`` uses
    model ``k``.  Rows sum to one; a deterministic encoder is the special
    case of one-hot rows.
    """

    slopes: np.ndarray
    intercepts: np.ndarray
    assoc: np.ndarray = field(repr=False)
    x_grid: np.ndarray = field(repr=False)

    @property
    def n_models(self) -> int:
        return len(self.slopes)

    @property
    def models(self) -> tuple[AffineModel, ...]:
        return tuple(AffineModel(float(a), float(b)) for a, b in zip(self.slopes, self.intercepts))

    def with_params(self, slopes, intercepts) -> "RandomizedEncoder":
        return replace(self, slopes=np.asarray(slopes, float), intercepts=np.asarray(intercepts, float))

    def with_assoc(self, assoc) -> "RandomizedEncoder":
        return replace(self, assoc=np.asarray(assoc, float))


def make_encoder(models, assoc, x_grid) -> RandomizedEncoder:
    """Build an encoder from (a, b) pairs (or an AffineModel list) and an association table."""
    models = [(m.a, m.b) if isinstance(m, AffineModel) else tuple(m) for m in models]
    slopes = np.array([a for a, _ in models], dtype=float)
    intercepts = np.array([b for _, b in models], dtype=float)
    assoc = np.asarray(assoc, dtype=float)
    x_grid = np.asarray(x_grid, dtype=float)
    if assoc.ndim != 2 or assoc.shape != (len(x_grid), len(slopes)):
        raise ValueError(
            f"association table shape {assoc.shape} does not match "
            f"{len(x_grid)} grid nodes x {len(slopes)} models"
        )
    if len(slopes) < 1:
        raise ValueError("an encoder needs at least one local model")
    return RandomizedEncoder(slopes=slopes, intercepts=intercepts, assoc=assoc, x_grid=x_grid)


def eval_model(encoder: RandomizedEncoder, k: int, x):
    """Evaluate local model ``k`` at ``x``."""
    if not 0 <= k < encoder.n_models:
        raise IndexError(f"model index {k} out of range [0, {encoder.n_models})")
    return encoder.slopes[k] * np.asarray(x, float) + encoder.intercepts[k]


def model_outputs(encoder: RandomizedEncoder, x_grid=None) -> np.ndarray:
    """All model outputs on a grid, shape (n_nodes, n_models)."""
    x = encoder.x_grid if x_grid is None else np.asarray(x_grid, float)
    return x[:, None] * encoder.slopes[None, :] + encoder.intercepts[None, :]


def harden(encoder: RandomizedEncoder) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic encoder from the associations: per node, the argmax model.

    Ties break toward the lowest model index.  Returns (output values,
    winning model indices), both length n_nodes.
    """
    winners = np.argmax(encoder.assoc, axis=1)
    values = encoder.x_grid * encoder.slopes[winners] + encoder.intercepts[winners]
    return values, winners


def one_hot_assoc(winners: np.ndarray, n_models: int) -> np.ndarray:
    table = np.zeros((len(winners), n_models))
    table[np.arange(len(winners)), winners] = 1.0
    return table


def encoder_power(encoder: RandomizedEncoder, source_marginal: np.ndarray) -> float:
    """Transmit power of a randomized encoder under the source node masses."""
    source_marginal = np.asarray(source_marginal, float)
    if len(source_marginal) != len(encoder.x_grid):
        raise ValueError(
            f"marginal length {len(source_marginal)} does not match grid length {len(encoder.x_grid)}"
        )
    g = model_outputs(encoder)
    return float(np.einsum("i,ik,ik->", source_marginal, encoder.assoc, g**2))


def encoder_power_gradient(encoder: RandomizedEncoder, source_marginal: np.ndarray):
    """Analytic partials of the power term, used as a finite-difference oracle.

    Returns (dP/da, dP/db), each of length n_models.
    """
    q = np.asarray(source_marginal, float)
    g = model_outputs(encoder)
    w = q[:, None] * encoder.assoc
    d_a = 2.0 * np.einsum("ik,ik,i->k", w, g, encoder.x_grid)
    d_b = 2.0 * np.einsum("ik,ik->k", w, g)
    return d_a, d_b


def grid_encoder_power(values: np.ndarray, source_marginal: np.ndarray) -> float:
    """Power of a deterministic grid encoder (one output value per node)."""
    return float(np.dot(np.asarray(source_marginal, float), np.asarray(values, float) ** 2))


@dataclass(frozen=True)
class DecoderTable:
    """Estimates of both sources tabulated on the output lattice.

    ``xhat1[i, j]`` estimates source 1 at ``(y_grid_1[i], y_grid_2[j])``.
    ``n_filled`` counts lattice nodes whose posterior mass underflowed and
    were filled from the nearest valid node.
    """

    grid: OutputGrid
    xhat1: np.ndarray = field(repr=False)
    xhat2: np.ndarray = field(repr=False)
    n_filled: int = 0


def _axis_locate(axis: np.ndarray, y) -> tuple[np.ndarray, np.ndarray]:
    """Lower node index and fractional offset of query points on a uniform axis.

    Out-of-range queries clamp to the edge: the index clips to the last cell
    and the fraction to [0, 1], which reproduces the edge node value.
    """
    y = np.asarray(y, float)
    h = axis[1] - axis[0]
    u = (y - axis[0]) / h
    idx = np.clip(np.floor(u).astype(np.int64), 0, len(axis) - 2)
    frac = np.clip(u - idx, 0.0, 1.0)
    return idx, frac


def decode_many(table: DecoderTable, y1, y2) -> tuple[np.ndarray, np.ndarray]:
    """Bilinearly interpolated estimates at broadcastable query arrays."""
    i1, t1 = _axis_locate(table.grid.y_grid_1, y1)
    i2, t2 = _axis_locate(table.grid.y_grid_2, y2)
    i1, t1, i2, t2 = np.broadcast_arrays(i1, t1, i2, t2)
    out = []
    for tab in (table.xhat1, table.xhat2):
        v00 = tab[i1, i2]
        v01 = tab[i1, i2 + 1]
        v10 = tab[i1 + 1, i2]
        v11 = tab[i1 + 1, i2 + 1]
        top = v00 * (1 - t2) + v01 * t2
        bot = v10 * (1 - t2) + v11 * t2
        out.append(top * (1 - t1) + bot * t1)
    return out[0], out[1]


def decode(table: DecoderTable, y1: float, y2: float) -> tuple[float, float]:
    """Scalar convenience wrapper around :func:`decode_many`."""
    xh1, xh2 = decode_many(table, y1, y2)
    return float(xh1), float(xh2)


def encoder_to_dict(encoder: RandomizedEncoder) -> dict:
    values, winners = harden(encoder)
    return {
        "models": [{"a": float(a), "b": float(b)} for a, b in zip(encoder.slopes, encoder.intercepts)],
        "assoc": encoder.assoc.tolist(),
        "x_grid": encoder.x_grid.tolist(),
        "hardened_values": values.tolist(),
        "hardened_model_index": winners.tolist(),
    }


def encoder_from_dict(d: dict) -> RandomizedEncoder:
    return make_encoder(
        [(m["a"], m["b"]) for m in d["models"]],
        np.array(d["assoc"], dtype=float),
        np.array(d["x_grid"], dtype=float),
    )


def decoder_to_dict(table: DecoderTable) -> dict:
    return {
        "y_grid_1": table.grid.y_grid_1.tolist(),
        "y_grid_2": table.grid.y_grid_2.tolist(),
        "xhat1": table.xhat1.tolist(),
        "xhat2": table.xhat2.tolist(),
        "n_filled": int(table.n_filled),
    }


def decoder_from_dict(d: dict) -> DecoderTable:
    grid = OutputGrid(
        y_grid_1=np.array(d["y_grid_1"], dtype=float),
        y_grid_2=np.array(d["y_grid_2"], dtype=float),
    )
    return DecoderTable(
        grid=grid,
        xhat1=np.array(d["xhat1"], dtype=float),
        xhat2=np.array(d["xhat2"], dtype=float),
        n_filled=int(d.get("n_filled", 0)),
    )
