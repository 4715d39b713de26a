"""Cost evaluations on the probability lattices.

This module owns every quantity the optimizers consume: the MMSE decoder
tables, the per-model-pair distortion tensor, expected distortion and
power, association entropy, the Lagrangian / free-energy bookkeeping, and
the Gibbs association update.

Two different noise discretizations are used on purpose: the decoder
integrates the *continuous* noise density (it is a function of real-valued
channel outputs), while the distortion tensor takes expectations over the
*discrete* noise masses.  Mixing the two is the consistent scheme for a
lattice-tabulated decoder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .codebook import (
    DecoderTable,
    RandomizedEncoder,
    _axis_locate,
    decode_many,
    model_outputs,
)
from .numerics import NoiseModel, OutputGrid, SourceModel, UNDERFLOW_FLOOR

_LOG_FLOOR = np.log(UNDERFLOW_FLOOR)


@dataclass(frozen=True)
class LagrangeWeights:
    """Nonnegative multipliers trading distortion against per-channel power."""

    lambda1: float
    lambda2: float

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError(f"multipliers must be nonnegative, got {self.lambda1}, {self.lambda2}")

    @classmethod
    def total(cls, lam: float) -> "LagrangeWeights":
        """Total-power variant: one multiplier shared by both channels."""
        return cls(lam, lam)

    def of(self, side: int) -> float:
        return self.lambda1 if side == 1 else self.lambda2


@dataclass(frozen=True)
class DistortionTensor:
    """Pairwise model distortion: ``values[k1, k2, i1, i2]`` is the expected
    squared error of both estimates when node ``i1`` uses model ``k1`` and
    node ``i2`` uses model ``k2``, averaged over both discrete noises."""

    values: np.ndarray


@dataclass(frozen=True)
class CostReport:
    """One consistent snapshot of all cost components."""

    distortion: float
    power1: float
    power2: float
    entropy: float
    lagrangian: float
    free_energy: float


def cost_report(
    distortion: float,
    power1: float,
    power2: float,
    entropy: float,
    weights: LagrangeWeights,
    temperature: float,
) -> CostReport:
    lagrangian = distortion + weights.lambda1 * power1 + weights.lambda2 * power2
    return CostReport(
        distortion=distortion,
        power1=power1,
        power2=power2,
        entropy=entropy,
        lagrangian=lagrangian,
        free_energy=lagrangian - temperature * entropy,
    )


def _mixture(encoder, x_grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Output matrix and weight matrix of an encoder on its grid.

    Returns ``(outputs, weights)`` of shape (n_nodes, n_models).  A
    deterministic grid encoder (array of per-node values, or an object with
    a ``values`` attribute) is a single-model mixture with unit weights.
    """
    if isinstance(encoder, RandomizedEncoder):
        return model_outputs(encoder), encoder.assoc
    values = np.asarray(getattr(encoder, "values", encoder), float)
    if values.shape != x_grid.shape:
        raise ValueError(f"grid encoder length {values.shape} does not match grid {x_grid.shape}")
    return values[:, None], np.ones((len(values), 1))


def compute_decoder(
    source: SourceModel,
    noise1: NoiseModel,
    noise2: NoiseModel,
    enc1,
    enc2,
    out_grid: OutputGrid,
) -> DecoderTable:
    """MMSE estimate tables on the output lattice for the given encoders.

    For each node pair the estimate is a posterior mean over the source
    lattice, with per-channel likelihoods mixing the continuous noise
    density over each encoder's local models.  The double sum is factored
    through an intermediate (source-1 node, output-2 node) matrix so the
    cost is O(Nx^2 Ny + Nx Ny^2) rather than O(Nx^2 Ny^2).

    Nodes whose posterior normalizer underflows are filled from the
    nearest valid node; the count is reported in ``n_filled``.
    """
    x1, x2 = source.x_grid_1, source.x_grid_2
    like1, scale1 = _channel_likelihood(out_grid.y_grid_1, enc1, x1, noise1)
    like2, scale2 = _channel_likelihood(out_grid.y_grid_2, enc2, x2, noise2)

    # mix2[i1, j2] aggregates source-2 mass against channel-2 likelihoods;
    # mix2x additionally carries the x2 payload for the second estimate.
    mix2 = source.q_joint @ like2.T
    mix2x = (source.q_joint * x2[None, :]) @ like2.T
    norm = like1 @ mix2
    num1 = (like1 * x1[None, :]) @ mix2
    num2 = like1 @ mix2x

    with np.errstate(divide="ignore", invalid="ignore"):
        log_norm = np.log(norm) + scale1[:, None] + scale2[None, :]
        xh1 = num1 / norm
        xh2 = num2 / norm
    valid = (norm > 0) & (log_norm >= _LOG_FLOOR)
    n_filled = int(np.size(valid) - np.count_nonzero(valid))
    if n_filled:
        if valid.any():
            nearest = ndimage.distance_transform_edt(~valid, return_distances=False, return_indices=True)
            xh1 = xh1[nearest[0], nearest[1]]
            xh2 = xh2[nearest[0], nearest[1]]
        else:
            xh1 = np.zeros_like(norm)
            xh2 = np.zeros_like(norm)
    return DecoderTable(grid=out_grid, xhat1=xh1, xhat2=xh2, n_filled=n_filled)


def _channel_likelihood(y_axis, encoder, x_grid, noise):
    """Model-mixed likelihood of each output node given each source node.

    Returns ``(levels, log_scale)`` where row ``j`` of ``levels`` is the
    likelihood profile of output node ``j`` rescaled by its row maximum and
    ``log_scale[j]`` is the log of that maximum.  Per-row rescaling cancels
    in the posterior ratios and keeps the factored products from
    underflowing.
    """
    g, p = _mixture(encoder, x_grid)
    diff = y_axis[:, None, None] - g[None, :, :]
    log_pdf = -0.5 * diff**2 / noise.var - 0.5 * np.log(2 * np.pi * noise.var)
    like = np.einsum("jik,ik->ji", np.exp(log_pdf), p)
    peak = like.max(axis=1)
    with np.errstate(divide="ignore"):
        log_scale = np.log(peak)
    safe = np.where(peak > 0, peak, 1.0)
    return like / safe[:, None], log_scale


# ---------------------------------------------------------------------------
# Distortion tensor
#
# The tensor entry for model pair (k1, k2) at node pair (x1, x2) is the
# discrete-noise expectation of the squared errors of both bilinearly
# interpolated estimates.  Expanding the squares turns the whole tensor into
# first and second interpolation moments of each estimate table, which are
# computed with dense matrix products: per-query row mixes of the table
# (axis 1) against sparse-in-structure column weight matrices (axis 2).
# This is algebraically identical to evaluating decode() per noise pair and
# summing, but runs at BLAS speed and supports single-model refreshes.
# ---------------------------------------------------------------------------


def _locate(axis: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Same cell/fraction convention as decode_many, including edge clamping,
    # so the moment expansion reproduces decode() exactly.
    return _axis_locate(axis, y)


def _column_weights(axis, outputs, n_grid, n_mass):
    """Weight matrices folding the column-side noise expectation.

    ``outputs`` has shape (n_models, n_nodes); queries are output + noise.
    Returns (W_lin, W_sq, W_cross) with one column per (model, node) pair:
    W_lin folds a plain interpolation, W_sq the squared per-node terms and
    W_cross the adjacent-node cross terms of a squared interpolation.
    """
    n_models, n_nodes = outputs.shape
    n_axis = len(axis)
    queries = outputs[:, :, None] + n_grid[None, None, :]
    idx, frac = _locate(axis, queries)
    cols = np.repeat(np.arange(n_models * n_nodes), len(n_grid))
    i = idx.reshape(-1)
    t = frac.reshape(-1)
    m = np.tile(n_mass, n_models * n_nodes)

    w_lin = np.zeros((n_axis, n_models * n_nodes))
    np.add.at(w_lin, (i, cols), m * (1 - t))
    np.add.at(w_lin, (i + 1, cols), m * t)
    w_sq = np.zeros((n_axis, n_models * n_nodes))
    np.add.at(w_sq, (i, cols), m * (1 - t) ** 2)
    np.add.at(w_sq, (i + 1, cols), m * t**2)
    w_cross = np.zeros((n_axis - 1, n_models * n_nodes))
    np.add.at(w_cross, (i, cols), 2.0 * m * (1 - t) * t)
    return w_lin, w_sq, w_cross


def _row_mix(table, idx, frac):
    """Interpolate table rows at the row-side queries: out[q] = table rows mixed."""
    t = frac.reshape(-1, 1)
    return (1.0 - t) * table[idx.reshape(-1)] + t * table[idx.reshape(-1) + 1]


class TensorEvaluator:
    """Distortion-tensor builder bound to one decoder.

    ``rebuild`` computes the full tensor for a pair of output matrices
    (shape (n_nodes, n_models) each).  ``side_values`` and ``slice_values``
    evaluate candidate tensors when one side's models move, reusing the
    other side's cached structures; neither mutates the cached state.
    """

    def __init__(self, source: SourceModel, noise1: NoiseModel, noise2: NoiseModel, decoder: DecoderTable):
        self.source = source
        self.noises = (noise1, noise2)
        self.decoder = decoder
        self._g = [None, None]
        self._rows = None       # (idx, frac) of side-1 queries
        self._r1 = None         # row mixes of xhat1 / xhat2 at side-1 queries
        self._r2 = None
        self._w = None          # column weight matrices of side-2 queries
        self.values = None

    # -- full builds --------------------------------------------------------

    def rebuild(self, outputs1: np.ndarray, outputs2: np.ndarray) -> DistortionTensor:
        self.set_side(1, outputs1)
        self.set_side(2, outputs2)
        return self.assemble()

    def set_side(self, side: int, outputs: np.ndarray):
        """Refresh one side's interpolation structures without assembling
        the tensor; ``values`` is stale until :meth:`assemble` runs."""
        outputs = np.asarray(outputs, float)
        self._g[side - 1] = outputs
        if side == 1:
            self._refresh_rows(outputs.T)
        else:
            self._refresh_cols(outputs.T)

    def assemble(self) -> DistortionTensor:
        self.values = self._assemble(self._r1, self._r2, self._w, self._g[0], self._g[1])
        return DistortionTensor(values=self.values)

    def _refresh_rows(self, outputs_km):
        noise = self.noises[0]
        queries = outputs_km[:, :, None] + noise.n_grid[None, None, :]
        self._rows = _locate(self.decoder.grid.y_grid_1, queries)
        self._r1 = _row_mix(self.decoder.xhat1, *self._rows)
        self._r2 = _row_mix(self.decoder.xhat2, *self._rows)

    def _refresh_cols(self, outputs_km):
        noise = self.noises[1]
        self._w = _column_weights(self.decoder.grid.y_grid_2, outputs_km, noise.n_grid, noise.n_mass)

    # -- candidate evaluations (no cache mutation) ---------------------------

    def side_values(self, side: int, outputs: np.ndarray) -> np.ndarray:
        """Full tensor with one side's output matrix replaced."""
        outputs = np.asarray(outputs, float)
        if side == 1:
            saved = self._rows, self._r1, self._r2
            self._refresh_rows(outputs.T)
            try:
                return self._assemble(self._r1, self._r2, self._w, outputs, self._g[1])
            finally:
                self._rows, self._r1, self._r2 = saved
        saved_w = self._w
        self._refresh_cols(outputs.T)
        try:
            return self._assemble(self._r1, self._r2, self._w, self._g[0], outputs)
        finally:
            self._w = saved_w

    def slice_values(self, side: int, k: int, column: np.ndarray) -> np.ndarray:
        """Tensor slice for model ``k`` of ``side`` evaluated at new outputs.

        ``column`` is the model's output vector over its source grid.  For
        side 1 the result has shape (K2, N1, N2); for side 2, (K1, N1, N2).
        """
        column = np.asarray(column, float)
        noise1, noise2 = self.noises
        if side == 1:
            queries = column[None, :, None] + noise1.n_grid[None, None, :]
            idx, frac = _locate(self.decoder.grid.y_grid_1, queries)
            r1 = _row_mix(self.decoder.xhat1, idx, frac)
            r2 = _row_mix(self.decoder.xhat2, idx, frac)
            vals = self._assemble(r1, r2, self._w, column[:, None], self._g[1])
            return vals[0]
        w = _column_weights(self.decoder.grid.y_grid_2, column[None, :], noise2.n_grid, noise2.n_mass)
        vals = self._assemble(self._r1, self._r2, w, self._g[0], column[:, None])
        return vals[:, 0]

    # -- assembly ------------------------------------------------------------

    def _fold_rows(self, q1_matrix, k1, n1):
        m1 = self.noises[0].n_mass
        shaped = q1_matrix.reshape(k1, n1, len(m1), -1)
        return np.tensordot(shaped, m1, axes=([2], [0]))

    def _assemble(self, r1, r2, w, outputs1, outputs2):
        w_lin, w_sq, w_cross = w
        n1, k1 = outputs1.shape
        n2, k2 = outputs2.shape
        x1 = self.source.x_grid_1
        x2 = self.source.x_grid_2

        moments = []
        for r in (r1, r2):
            lin = self._fold_rows(r @ w_lin, k1, n1)
            sq = self._fold_rows((r * r) @ w_sq + (r[:, :-1] * r[:, 1:]) @ w_cross, k1, n1)
            moments.append((lin.reshape(k1, n1, k2, n2), sq.reshape(k1, n1, k2, n2)))
        (e1, e1sq), (e2, e2sq) = moments

        vals = (
            x1[None, :, None, None] ** 2
            - 2.0 * x1[None, :, None, None] * e1
            + e1sq
            + x2[None, None, None, :] ** 2
            - 2.0 * x2[None, None, None, :] * e2
            + e2sq
        )
        # Exact zero errors can round to tiny negatives under the expansion.
        vals = np.maximum(vals.transpose(0, 2, 1, 3), 0.0)
        return np.ascontiguousarray(vals)


class ModelCostContext:
    """Fast per-model cost probes with everything but one model frozen.

    During model descent, only one side's affine parameters move while the
    decoder, both association tables, and the opposite models stay fixed.
    The joint-mass / association / opposite-noise contractions then factor
    out of the probe, so this context pre-collapses them against the
    evaluator's cached interpolation structures; each probe costs a pair of
    table-row gathers plus a handful of small contractions.

    ``model_cost(column)`` returns, per own-grid node i, the joint-mass
    weighted expected distortion when node i uses a model with output
    ``column[i]`` (summed over the opposite side's nodes, models and both
    noises).  It matches the corresponding contraction of the full tensor
    to float round-off.
    """

    def __init__(self, evaluator: "TensorEvaluator", side: int, assoc_other: np.ndarray):
        self.ev = evaluator
        self.side = side
        src = evaluator.source
        self.own_x = src.x_grid(side)
        q = src.q_joint
        if side == 1:
            # Collapse the (opposite model, opposite node) columns per own
            # node: wcol[(l, j), i] = assoc_other[j, l] * q[i, j], ordered to
            # match the evaluator's column-weight matrices.
            p2 = assoc_other
            x2 = src.x_grid_2
            stacked = p2.T[:, :, None] * q.T[None, :, :]          # (K2, N2, N1)
            wcol = stacked.reshape(-1, q.shape[0])
            wcol_x = (stacked * x2[None, :, None]).reshape(-1, q.shape[0])
            w_lin, w_sq, w_cross = evaluator._w
            c_lin = w_lin @ wcol
            c_lin_x = w_lin @ wcol_x
            c_sq = w_sq @ wcol
            c_cross = w_cross @ wcol
            # Pre-contract the decoder tables over the opposite output axis,
            # so probes gather scalars instead of whole table rows.  The
            # squared-interpolation terms need same-row, adjacent-row and
            # diagonal row-pair products of the tables.
            t1 = evaluator.decoder.xhat1
            t2 = evaluator.decoder.xhat2
            self.lin1 = t1 @ c_lin
            self.lin2 = t2 @ c_lin_x
            self.sq_same_1 = (t1 * t1) @ c_sq + (t1[:, :-1] * t1[:, 1:]) @ c_cross
            self.sq_pair_1 = 2.0 * (t1[:-1] * t1[1:]) @ c_sq + (
                (t1[:-1, :-1] * t1[1:, 1:]) + (t1[1:, :-1] * t1[:-1, 1:])
            ) @ c_cross
            self.sq_same_2 = (t2 * t2) @ c_sq + (t2[:, :-1] * t2[:, 1:]) @ c_cross
            self.sq_pair_2 = 2.0 * (t2[:-1] * t2[1:]) @ c_sq + (
                (t2[:-1, :-1] * t2[1:, 1:]) + (t2[1:, :-1] * t2[:-1, 1:])
            ) @ c_cross
            self.const = self.own_x**2 * wcol.sum(axis=0) + np.einsum(
                "lji,j->i", stacked, x2**2
            )
        else:
            # Collapse the (own-table rows) side: wrow[(k, i, n), j] =
            # assoc_other[i, k] * q[i, j] * m1[n], matching the R-row order.
            p1 = assoc_other
            x1 = src.x_grid_1
            m1 = evaluator.noises[0].n_mass
            base = p1.T[:, :, None] * q[None, :, :]               # (K1, N1, N2)
            wrow = (base[:, :, None, :] * m1[None, None, :, None]).reshape(-1, q.shape[1])
            wrow_x = ((base * x1[None, :, None])[:, :, None, :] * m1[None, None, :, None]).reshape(
                -1, q.shape[1]
            )
            r1, r2 = evaluator._r1, evaluator._r2
            self.r1_lin_x = r1.T @ wrow_x
            self.r1_sq = (r1 * r1).T @ wrow
            self.r1_cross = (r1[:, :-1] * r1[:, 1:]).T @ wrow
            self.r2_lin = r2.T @ wrow
            self.r2_sq = (r2 * r2).T @ wrow
            self.r2_cross = (r2[:, :-1] * r2[:, 1:]).T @ wrow
            self.noise_grid = evaluator.noises[1].n_grid
            self.noise_mass = evaluator.noises[1].n_mass
            folded = base.sum(axis=0) * m1.sum()                  # (N1, N2)
            self.const = (x1**2) @ folded + self.own_x**2 * wrow.sum(axis=0)

    def model_cost(self, columns: np.ndarray) -> np.ndarray:
        """Distortion rows for candidate output columns, shape (..., n) -> same."""
        columns = np.asarray(columns, float)
        shape = columns.shape
        flat = columns.reshape(-1, shape[-1])
        b, n = flat.shape
        ev = self.ev
        if self.side == 1:
            noise = ev.noises[0]
            queries = flat[:, :, None] + noise.n_grid[None, None, :]
            idx, frac = _locate(ev.decoder.grid.y_grid_1, queries)   # (b, n, n_noise)
            cols = np.arange(n)[None, :, None]
            t = frac
            u = 1.0 - t
            m = noise.n_mass

            def lin_term(plane):
                return np.einsum("bin,n->bi", u * plane[idx, cols] + t * plane[idx + 1, cols], m)

            def sq_term(same, pair):
                vals = u * u * same[idx, cols] + t * u * pair[idx, cols] + t * t * same[idx + 1, cols]
                return np.einsum("bin,n->bi", vals, m)

            e1_lin = lin_term(self.lin1)
            e2_lin = lin_term(self.lin2)
            e1_sq = sq_term(self.sq_same_1, self.sq_pair_1)
            e2_sq = sq_term(self.sq_same_2, self.sq_pair_2)
            out = self.const[None, :] - 2.0 * self.own_x[None, :] * e1_lin + e1_sq - 2.0 * e2_lin + e2_sq
            return out.reshape(shape)
        w_lin, w_sq, w_cross = _column_weights(
            ev.decoder.grid.y_grid_2, flat, self.noise_grid, self.noise_mass
        )
        w_lin = w_lin.reshape(-1, b, n)
        w_sq = w_sq.reshape(-1, b, n)
        w_cross = w_cross.reshape(-1, b, n)
        e1_lin = np.einsum("Ybj,Yj->bj", w_lin, self.r1_lin_x)
        e1_sq = np.einsum("Ybj,Yj->bj", w_sq, self.r1_sq) + np.einsum("Ybj,Yj->bj", w_cross, self.r1_cross)
        e2_lin = np.einsum("Ybj,Yj->bj", w_lin, self.r2_lin)
        e2_sq = np.einsum("Ybj,Yj->bj", w_sq, self.r2_sq) + np.einsum("Ybj,Yj->bj", w_cross, self.r2_cross)
        out = self.const[None, :] - 2.0 * e1_lin + e1_sq - 2.0 * self.own_x[None, :] * e2_lin + e2_sq
        return out.reshape(shape)


def compute_distortion_tensor(
    source: SourceModel,
    noise1: NoiseModel,
    noise2: NoiseModel,
    enc1,
    enc2,
    decoder: DecoderTable,
) -> DistortionTensor:
    """Pairwise model distortion tensor under the discrete noise masses."""
    g1, _ = _mixture(enc1, source.x_grid_1)
    g2, _ = _mixture(enc2, source.x_grid_2)
    return TensorEvaluator(source, noise1, noise2, decoder).rebuild(g1, g2)


def tensor_reference(source, noise1, noise2, enc1, enc2, decoder) -> np.ndarray:
    """Direct per-noise-pair tensor evaluation; slow, for verification."""
    g1, _ = _mixture(enc1, source.x_grid_1)
    g2, _ = _mixture(enc2, source.x_grid_2)
    x1, x2 = source.x_grid_1, source.x_grid_2
    k1, k2 = g1.shape[1], g2.shape[1]
    out = np.empty((k1, k2, len(x1), len(x2)))
    for a in range(k1):
        y1 = g1[:, a][:, None, None, None] + noise1.n_grid[None, :, None, None]
        for b in range(k2):
            y2 = g2[:, b][None, None, :, None] + noise2.n_grid[None, None, None, :]
            xh1, xh2 = decode_many(decoder, y1, y2)
            err = (x1[:, None, None, None] - xh1) ** 2 + (x2[None, None, :, None] - xh2) ** 2
            out[a, b] = np.einsum("injm,n,m->ij", err, noise1.n_mass, noise2.n_mass)
    return out


def expected_distortion(tensor: DistortionTensor, source: SourceModel, enc1, enc2) -> float:
    """Expected distortion of the randomized system under the joint masses."""
    _, p1 = _mixture(enc1, source.x_grid_1)
    _, p2 = _mixture(enc2, source.x_grid_2)
    return float(np.einsum("ij,ik,jl,klij->", source.q_joint, p1, p2, tensor.values))


def conditional_model_cost(
    tensor: DistortionTensor,
    source: SourceModel,
    other_assoc: np.ndarray,
    lam: float,
    encoder: RandomizedEncoder,
    side: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-node cost of committing to each local model.

    Row ``i`` gives, for each model ``k``, the expected distortion over the
    opposite source (mixed by its associations) plus the weighted power of
    the model's output at node ``i``.  This is the exponent table of the
    Gibbs update.  Rows flagged for marginal underflow contribute only the
    power term and are returned in the flag vector.
    """
    v = tensor.values
    cond = source.conditional_other_given(side)
    flags = source.flagged_rows(side)
    if side == 1:
        mixed = np.einsum("klij,jl->kij", v, other_assoc)
        dist = np.einsum("kij,ij->ik", mixed, cond)
    else:
        mixed = np.einsum("klij,ik->lij", v, other_assoc)
        dist = np.einsum("lij,ji->jl", mixed, cond)
    g = model_outputs(encoder)
    return dist + lam * g**2, flags


def gibbs_update(cost_table: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise Gibbs distribution over models at the given temperature.

    Stabilized by per-row max subtraction, so arbitrarily small
    temperatures reduce to an exact argmin indicator.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = -np.asarray(cost_table, float) / temperature
    z -= z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    return p


def association_entropy(assoc: np.ndarray, marginal: np.ndarray) -> float:
    p = np.asarray(assoc, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0, p * np.log(p), 0.0)
    return float(-np.dot(np.asarray(marginal, float), plogp.sum(axis=1)))


def compute_entropy(enc1: RandomizedEncoder, enc2: RandomizedEncoder, source: SourceModel) -> float:
    """Total association entropy (nats), summed over both encoders."""
    return association_entropy(enc1.assoc, source.q_marg_1) + association_entropy(
        enc2.assoc, source.q_marg_2
    )


class NodeCostEvaluator:
    """Conditional distortion of per-node output values for one encoder.

    Bound to a fixed decoder and a fixed deterministic opposite encoder,
    this evaluates the expected distortion contribution of each source node
    of ``side`` as a function of that node's candidate output value.  Node
    subproblems are independent under these conditions, so a whole vector
    of per-node candidates is scored in one pass; the pointwise greedy
    engine leans on this for its candidate scans.
    """

    def __init__(
        self,
        source: SourceModel,
        noise1: NoiseModel,
        noise2: NoiseModel,
        decoder: DecoderTable,
        side: int,
        other_values: np.ndarray,
    ):
        self.side = side
        self.own_noise = noise1 if side == 1 else noise2
        self.own_axis = decoder.grid.axis(side)
        self.own_x = source.x_grid(side)
        other_x = source.x_grid(3 - side)
        self.cond = source.conditional_other_given(side)
        other_noise = noise2 if side == 1 else noise1
        self._w = _column_weights(
            decoder.grid.axis(3 - side),
            np.asarray(other_values, float)[None, :],
            other_noise.n_grid,
            other_noise.n_mass,
        )
        # Table layout puts channel-1 outputs on the rows; scoring side 2
        # row-wise therefore works on the transposed tables.
        if side == 1:
            self._own_table = decoder.xhat1
            self._other_table = decoder.xhat2
        else:
            self._own_table = np.ascontiguousarray(decoder.xhat2.T)
            self._other_table = np.ascontiguousarray(decoder.xhat1.T)
        # Constant-in-candidate part of the quadratic.  Flagged conditional
        # rows sum to zero, which correctly zeroes their contribution.
        self._const = self.own_x**2 * self.cond.sum(axis=1) + self.cond @ other_x**2
        self._other_x = other_x

    def costs(self, candidates: np.ndarray) -> np.ndarray:
        """Score candidate output vectors, shape (..., n_nodes) -> same."""
        candidates = np.asarray(candidates, float)
        batch_shape = candidates.shape[:-1]
        flat = candidates.reshape(-1, candidates.shape[-1])
        n_batch, n_nodes = flat.shape
        m = self.own_noise.n_mass
        w_lin, w_sq, w_cross = self._w

        queries = flat[:, :, None] + self.own_noise.n_grid[None, None, :]
        idx, frac = _locate(self.own_axis, queries)
        r_own = _row_mix(self._own_table, idx, frac)
        r_other = _row_mix(self._other_table, idx, frac)

        def fold(mat):
            return np.tensordot(mat.reshape(n_batch, n_nodes, len(m), -1), m, axes=([2], [0]))

        e_own = fold(r_own @ w_lin)
        e_own_sq = fold((r_own * r_own) @ w_sq + (r_own[:, :-1] * r_own[:, 1:]) @ w_cross)
        e_oth = fold(r_other @ w_lin)
        e_oth_sq = fold((r_other * r_other) @ w_sq + (r_other[:, :-1] * r_other[:, 1:]) @ w_cross)

        rest = e_own_sq - 2.0 * self._other_x[None, None, :] * e_oth + e_oth_sq
        per_node = (
            self._const[None, :]
            - 2.0 * self.own_x[None, :] * np.einsum("bij,ij->bi", e_own, self.cond)
            + np.einsum("bij,ij->bi", rest, self.cond)
        )
        return per_node.reshape(*batch_shape, n_nodes)
