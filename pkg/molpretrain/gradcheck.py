# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at http://mozilla.org/MPL/2.0/.

"""Central finite-difference oracle for tape gradients."""

from dataclasses import dataclass, field
from typing import (
    Callable,
    Dict,
    Mapping,
    Optional,
)

import numpy as np

from . import numcore as nc
from .chem import parse_smiles
from .logger import logger
from .molgnet import MolGNetConfig
from .numcore import Tape, Tensor
from .pretraining import (
    PretrainModel,
    PretrainSample,
    SubgraphPair,
    apply_attr_mask,
    decompose,
    pretrain_losses,
    stitch,
)

# Gradients smaller than this are compared in absolute rather than relative terms.
SCALE_FLOOR = 1e-3
MODEL_CHECK_SMILES = "CCCO"


@dataclass
class GradCheckReport:
    tolerance: float
    max_rel_error: float = 0.0
    coordinates: int = 0
    per_tensor: Dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def merge(self, prefix: str, other: "GradCheckReport"):
        for name, err in other.per_tensor.items():
            self.per_tensor[f"{prefix}{name}"] = err
        self.coordinates += other.coordinates
        self.max_rel_error = max(self.max_rel_error, other.max_rel_error)


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), SCALE_FLOOR)


def check_parameters(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = 1e-6,
    tol: float = 1e-4,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare tape gradients of ``loss_fn()`` with central differences.

    Every coordinate of every tensor in `params` is perturbed, or a seeded
    sample of `max_coords` coordinates per tensor when given.  The data is
    restored afterwards.
    """
    for tensor in params.values():
        if tensor.data.dtype != np.float64:
            logger.warning("gradient check on non 64-bit data is unreliable")
        tensor.requires_grad = True
        tensor.zero_grad()

    with Tape():
        loss = loss_fn()
        nc.backward(loss)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance=tol)
    for name, tensor in params.items():
        analytic = (
            tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        )
        flat = tensor.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))

        worst = 0.0
        for i in coords:
            original = flat[i]
            flat[i] = original + h
            plus = loss_fn().item()
            flat[i] = original - h
            minus = loss_fn().item()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * h)
            worst = max(worst, relative_error(float(analytic.reshape(-1)[i]), numeric))

        report.per_tensor[name] = worst
        report.coordinates += len(coords)
        report.max_rel_error = max(report.max_rel_error, worst)
        tensor.zero_grad()

    return report


def finite_difference_check(
    f: Callable[[Tensor], Tensor], x: Tensor, h: float = 1e-6, tol: float = 1e-4
) -> GradCheckReport:
    """Check the gradient of scalar ``f(x)`` with respect to every entry of `x`."""
    return check_parameters(lambda: f(x), {"x": x}, h=h, tol=tol)


def op_suite(seed: int = 0) -> Dict[str, GradCheckReport]:
    """Gradient reports for every differentiable operation on seeded inputs."""
    rng = np.random.default_rng(seed)

    def rand(*shape):
        return Tensor(rng.normal(size=shape), dtype=np.float64)

    a, b = rand(3, 4), rand(4, 2)
    w, bias = rand(5, 4), rand(5)
    gamma, beta = rand(4), rand(4)
    table = rand(6, 3)
    mask = np.array(
        [[True, False, True, True], [False, True, True, False], [True, True, False, False]]
    )
    labels = (rng.random(size=(3, 4)) > 0.5).astype(float)
    classes = np.array([0, 3, 1])
    indices = np.array([[0, 5], [2, 2], [4, 1]])

    def weighted(t: Tensor) -> Tensor:
        # fixed, asymmetric weights so that no gradient vanishes by symmetry
        return nc.sum(nc.mul(t, np.cos(np.arange(t.size)).reshape(t.shape)))

    cases = {
        "matmul": (lambda x: weighted(nc.matmul(x, b)), a),
        "linear": (lambda x: weighted(nc.linear(a, x, bias)), w),
        "einsum": (lambda x: weighted(nc.einsum("ij,jk->ik", x, b)), a),
        "add_mul": (lambda x: weighted(nc.mul(nc.add(x, a), x)), a),
        "sigmoid": (lambda x: weighted(nc.sigmoid(x)), a),
        "tanh": (lambda x: weighted(nc.tanh(x)), a),
        "gelu": (lambda x: weighted(nc.gelu(x)), a),
        "layer_norm": (lambda x: weighted(nc.layer_norm(x, gamma, beta)), a),
        "softmax_rows": (lambda x: weighted(nc.softmax_rows(x)), a),
        "masked_softmax_rows": (lambda x: weighted(nc.softmax_rows(x, mask)), a),
        "concat_last": (lambda x: weighted(nc.concat_last([x, nc.tanh(x)])), a),
        "embedding_lookup": (
            lambda x: weighted(nc.sum(nc.embedding_lookup(x, indices), axis=1)),
            table,
        ),
        "segment_sum": (
            lambda x: weighted(nc.segment_sum(x, np.array([1, 0, 1]), 2)),
            a,
        ),
        "binary_cross_entropy": (
            lambda x: nc.cross_entropy_logits(x, labels, kind="binary"),
            a,
        ),
        "categorical_cross_entropy": (
            lambda x: nc.cross_entropy_logits(x, classes, kind="categorical"),
            a,
        ),
        "mse": (lambda x: nc.mse_loss(x, labels), a),
    }

    reports = {}
    for name, (f, x) in cases.items():
        reports[name] = finite_difference_check(
            f, Tensor(x.data.copy(), dtype=np.float64)
        )
    return reports


def model_check(
    config: MolGNetConfig,
    h: float = 1e-6,
    tol: float = 1e-4,
    max_coords: Optional[int] = None,
    seed: int = 0,
    smiles: str = MODEL_CHECK_SMILES,
) -> GradCheckReport:
    """Gradient report for the joint pre-training loss through the whole model.

    The molecule is cut into a homologous pair, stitched, and one atom masked;
    every backbone and head parameter is checked in 64-bit arithmetic.
    """
    previous = nc.get_default_dtype()
    nc.set_default_dtype(np.float64)
    try:
        rng = np.random.default_rng(seed)
        model = PretrainModel.initialize(config, seed)
        left, right = decompose(parse_smiles(smiles), rng)
        batch, positions, targets = apply_attr_mask(
            stitch(SubgraphPair(left, right, 1)), 0.15, rng
        )
        sample = PretrainSample(batch, 1, positions, targets)
        return check_parameters(
            lambda: pretrain_losses([sample], model)[0],
            model.parameters(),
            h=h,
            tol=tol,
            max_coords=max_coords,
            seed=seed,
        )
    finally:
        nc.set_default_dtype(previous)
