"""Problem definitions: the PDE sensor-placement problems with affine or
periodic coefficient, and a linear toy model with a dense reference."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .cubature import GaussianIntegrand, make_config
from .fem import UNIVERSE, Design, DiffusionField, ForwardModel
from .lattice import GeneratingVector, bundled_generating_vector, cbc_construct, load_generating_vector
from .likelihood import NoiseModel, TruncationBox
from .weights import RegularityParams, order_dependent_weights_outer, pod_weights_inner, product_weights

PROBLEMS = ("paper_i", "paper_ii", "toy_analytic", "manufactured")
INNER_SOURCES = ("cbc", "bundled")
OUTER_SOURCES = ("theory", "product", "bundled")


@lru_cache(maxsize=32)
def _cbc_cached(kind, n, s, b, mu, K, k, p, C):
    if kind == "inner":
        w = pod_weights_inner(RegularityParams(C=C, b=b, p=p, mu_min=mu, K=K, k=k))
    elif kind == "product":
        w = product_weights([1.0] * s)
    else:
        w = order_dependent_weights_outer(RegularityParams(C=C, b=(1.0,) * s, p=p, mu_min=mu, K=K, k=k))
    return cbc_construct(n, s, w)


@dataclass
class Problem:
    """Everything an estimator needs apart from the level and shifts."""

    name: str
    s: int
    noise: NoiseModel
    box: TruncationBox
    forward_for: object  # Design -> callable(theta (n,s)) -> (n,k)
    b: tuple
    model: ForwardModel | None = None
    inner_vector_file: str | None = None
    outer_vector_file: str | None = None
    p: float = 0.6
    inner_source: str = "cbc"  # cbc (POD weights) | bundled
    outer_source: str = "theory"  # theory (order-dependent weights) | product | bundled

    def __post_init__(self):
        if self.inner_source not in INNER_SOURCES:
            raise ValueError(f"inner_source must be one of {INNER_SOURCES}")
        if self.outer_source not in OUTER_SOURCES:
            raise ValueError(f"outer_source must be one of {OUTER_SOURCES}")

    @property
    def k(self):
        return self.noise.k

    @property
    def log_c(self):
        return self.noise.log_norm

    def integrand(self, design: Design) -> GaussianIntegrand:
        f = GaussianIntegrand(self.forward_for(design), self.noise, self.s)
        f.periodic = self.model is not None and self.model.field.kind == "periodic"
        return f

    def inner_vector(self, n: int) -> GeneratingVector:
        if self.inner_vector_file:
            return load_generating_vector(self.inner_vector_file, self.s)
        if self.inner_source == "bundled":
            return bundled_generating_vector(self.s)
        return _cbc_cached("inner", n, self.s, self.b, min(self.noise.mu_min, 1.0), self.box.K, self.k, self.p, 1.0)

    def outer_vector(self, n: int) -> GeneratingVector:
        if self.outer_vector_file:
            return load_generating_vector(self.outer_vector_file, self.k)
        if self.outer_source == "bundled":
            return bundled_generating_vector(self.k)
        if self.outer_source == "product":
            return _cbc_cached("product", n, self.k, (), 1.0, 1.0, self.k, self.p, 1.0)
        return _cbc_cached("outer", n, self.k, (), min(self.noise.mu_min, 1.0), self.box.K, self.k, self.p, 1.0)

    def config(self, method, L, R=1, seed=0, offset=1, outer_family="lattice", sigma=1.0,
               index_shift=2, top_level=None):
        """Estimator config. Generating vectors are built once for the
        largest point count of the sweep (``top_level``) and reused below it."""
        top = L if top_level is None else max(L, top_level)
        n_in = 2 ** (int(math.ceil(sigma * top)) + offset)
        n_out = 2 ** (top + offset)
        outer_vec = self.outer_vector(n_out) if outer_family == "lattice" else None
        return make_config(method, L, self.s, self.box, self.inner_vector(n_in), outer_vec, R=R, seed=seed,
                           offset=offset, outer_offset=offset, outer_family=outer_family, sigma=sigma,
                           index_shift=index_shift)


def pde_problem(kind="affine", s=10, q=4, gamma=0.01, K=0.5, center=None, k=3, eps=None,
                inner_vector_file=None, outer_vector_file=None, use_cache=True,
                inner_source="bundled", outer_source="product") -> Problem:
    """The sensor-placement problem on the 3x3 sensor grid.

    With ``eps`` the half-width K is chosen from the tail bound instead.
    Default vectors: the shipped embedded vector for the parameter integral
    and a unit product-weight CBC vector for the data integral. The
    theoretical outer weights at small noise put almost all weight on the
    full interaction, and CBC then returns repeated components.
    """
    field_ = DiffusionField(kind, s)
    model = ForwardModel(q, field_, "10*x1", cache_points=UNIVERSE, use_cache=use_cache)
    noise = NoiseModel.isotropic(k, gamma)
    if eps is not None:
        from .likelihood import choose_truncation
        # worst case over sampled parameters: the largest observation seen
        theta = np.random.default_rng(0).random((64, s)) - 0.5
        G_bar = np.full(k, float(np.abs(model.universe_batch(theta)).max()))
        K, _ = choose_truncation(noise, G_bar, eps)
    box = TruncationBox(K, k, center)
    scale = field_.amplitude * (2 * math.pi if kind == "periodic" else 1.0)
    b = tuple(scale / j ** 2 for j in range(1, s + 1))

    def forward_for(design):
        return lambda theta: model.forward_batch(theta, design)

    name = "paper_i" if kind == "affine" else "paper_ii"
    return Problem(name, s, noise, box, forward_for, b, model, inner_vector_file, outer_vector_file,
                   inner_source=inner_source, outer_source=outer_source)


def toy_problem(s=1, gamma=1.0, K=2.0, a=None, inner_vector_file=None, outer_vector_file=None) -> Problem:
    """k = 1, G(theta) = sum_j a_j theta_j with a = (1, 1/2, ...).
    Generating vectors come from CBC unless files are given."""
    a = np.array([1.0 / (j + 1) for j in range(s)] if a is None else a, dtype=np.float64)
    noise = NoiseModel.isotropic(1, gamma)
    box = TruncationBox(K, 1)

    def forward_for(design=None):
        return lambda theta: (np.asarray(theta) @ a)[:, None]

    return Problem("toy_analytic", s, noise, box, forward_for, tuple(float(abs(v)) for v in a),
                   inner_vector_file=inner_vector_file, outer_vector_file=outer_vector_file)


TOY_DESIGN = Design(((0.5, 0.5),))


def manufactured_model(q: int) -> ForwardModel:
    """a = 1 with the source that makes u = sin(pi x1) sin(pi x2)."""
    return ForwardModel(q, DiffusionField("affine", 1, amplitude=0.0), "manufactured", use_cache=False)


def manufactured_exact(x):
    x = np.asarray(x, dtype=np.float64)
    return np.sin(math.pi * x[..., 0]) * np.sin(math.pi * x[..., 1])


def fem_order_study(qs=(3, 4, 5, 6)):
    """L2 errors of the manufactured problem for h = 2^-q and the fitted slope
    of log(error) against log(h). Returns (hs, errors, slope)."""
    hs, errs = [], []
    for q in qs:
        model = manufactured_model(q)
        u = model.assemble_and_solve(np.zeros(1))
        hs.append(2.0 ** -q)
        errs.append(model.l2_error(u, manufactured_exact))
    slope = float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
    return hs, errs, slope
