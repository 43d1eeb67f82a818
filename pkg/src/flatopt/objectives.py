"""Differentiable scalar losses with analytic gradients.

Three families cover everything the optimizers and the verification toolkit
need at desk scale:

* ``quadratic_objective``  -- diagonal quadratics, exact in every derivative;
  the workhorse oracle because the perturbed-loss formulas are exact on them.
* ``toy_landscape``        -- a two-well 2-d surface with one sharp and one
  wide minimum. The surface is this library's own construction (a sum of two
  Gaussian wells plus a weak quadratic confinement), built so that a grid
  search certifies the two-minima structure.
* ``mlp_objective``        -- a small tanh multilayer perceptron with
  label-smoothed softmax cross-entropy, analytic backprop and per-example
  gradients. tanh keeps the loss twice differentiable everywhere, so
  Hessian-based diagnostics stay well-posed.

Exact dense Hessians are offered only up to ``HESSIAN_LIMIT`` parameters;
beyond that, Hessian-vector products (central differences of the analytic
gradient) are the supported curvature access.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionTooLarge, ShapeMismatch
from .rng import STREAM_INIT, philox_generator
from .validation import check_param_vector

HESSIAN_LIMIT = 64


class Objective:
    """Capability contract for a twice-differentiable scalar loss.

    ``batch`` is an optional ``(inputs, labels)`` pair; analytic objectives
    ignore it. All evaluators are stateless and safe to call concurrently.
    """

    p: int

    def value(self, theta, batch=None) -> float:
        raise NotImplementedError

    def gradient(self, theta, batch=None) -> np.ndarray:
        raise NotImplementedError

    def per_example_gradients(self, theta, batch=None) -> np.ndarray:
        """Gradients of the individual example losses, shape (n_examples, p).

        Their mean equals ``gradient``. Analytic objectives report a single
        row (they have no examples).
        """
        return self.gradient(theta, batch)[None, :]

    def value_batch(self, thetas, batch=None) -> np.ndarray:
        """Loss at many parameter vectors, shape (m,). Default is a loop."""
        thetas = np.asarray(thetas, dtype=np.float64)
        return np.array([self.value(t, batch) for t in thetas])

    def gradient_batch(self, thetas, batch=None) -> np.ndarray:
        """Gradients at many parameter vectors, shape (m, p). Default is a loop."""
        thetas = np.asarray(thetas, dtype=np.float64)
        return np.stack([self.gradient(t, batch) for t in thetas])

    def hessian(self, theta, batch=None) -> np.ndarray:
        """Dense symmetric Hessian; only offered for p <= HESSIAN_LIMIT.

        Default implementation: central finite differences of the analytic
        gradient, symmetrized.
        """
        if self.p > HESSIAN_LIMIT:
            raise DimensionTooLarge(
                f"dense Hessian limited to p <= {HESSIAN_LIMIT}, got p = {self.p}"
            )
        theta = check_param_vector(theta, self.p, name="theta")
        h = 1e-5 * (1.0 + np.abs(theta))
        H = np.empty((self.p, self.p))
        for j in range(self.p):
            step = np.zeros(self.p)
            step[j] = h[j]
            H[:, j] = (self.gradient(theta + step, batch) - self.gradient(theta - step, batch)) / (
                2.0 * h[j]
            )
        return 0.5 * (H + H.T)

    def hvp(self, theta, v, batch=None) -> np.ndarray:
        """Hessian-vector product by central differences of the gradient."""
        theta = check_param_vector(theta, self.p, name="theta")
        v = check_param_vector(v, self.p, name="v")
        norm = np.linalg.norm(v)
        if norm == 0.0:
            return np.zeros(self.p)
        h = 1e-5 * (1.0 + norm)
        unit = v / norm
        return (
            (self.gradient(theta + h * unit, batch) - self.gradient(theta - h * unit, batch))
            / (2.0 * h)
            * norm
        )


class QuadraticObjective(Objective):
    """L(theta) = 0.5 * theta' diag(A) theta - b' theta."""

    def __init__(self, a_diag, b=None):
        # nonconvex diagonals are allowed (saddle diagnostics)
        self.a_diag = check_param_vector(a_diag, name="a_diag")
        self.p = self.a_diag.size
        self.b = (
            np.zeros(self.p) if b is None else check_param_vector(b, self.p, name="b")
        )

    def value(self, theta, batch=None) -> float:
        theta = check_param_vector(theta, self.p, name="theta")
        return float(0.5 * np.dot(theta, self.a_diag * theta) - np.dot(self.b, theta))

    def value_batch(self, thetas, batch=None) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=np.float64)
        return 0.5 * np.sum(thetas * thetas * self.a_diag, axis=-1) - thetas @ self.b

    def gradient(self, theta, batch=None) -> np.ndarray:
        theta = check_param_vector(theta, self.p, name="theta")
        return self.a_diag * theta - self.b

    def gradient_batch(self, thetas, batch=None) -> np.ndarray:
        return np.asarray(thetas, dtype=np.float64) * self.a_diag - self.b

    def hessian(self, theta, batch=None) -> np.ndarray:
        return np.diag(self.a_diag)

    def hvp(self, theta, v, batch=None) -> np.ndarray:
        return self.a_diag * np.asarray(v, dtype=np.float64)


def quadratic_objective(a_diag, b=None) -> QuadraticObjective:
    """Diagonal quadratic with exact gradient and Hessian at every point."""
    return QuadraticObjective(a_diag, b)


class QuarticObjective(Objective):
    """L(theta) = sum_i c_i theta_i^4 / 4, a smooth non-quadratic test surface."""

    def __init__(self, c_diag):
        self.c_diag = check_param_vector(c_diag, name="c_diag")
        self.p = self.c_diag.size

    def value(self, theta, batch=None) -> float:
        theta = check_param_vector(theta, self.p, name="theta")
        return float(0.25 * np.sum(self.c_diag * theta**4))

    def value_batch(self, thetas, batch=None) -> np.ndarray:
        thetas = np.asarray(thetas, dtype=np.float64)
        return 0.25 * np.sum(self.c_diag * thetas**4, axis=-1)

    def gradient(self, theta, batch=None) -> np.ndarray:
        theta = check_param_vector(theta, self.p, name="theta")
        return self.c_diag * theta**3

    def gradient_batch(self, thetas, batch=None) -> np.ndarray:
        return self.c_diag * np.asarray(thetas, dtype=np.float64) ** 3

    def hessian(self, theta, batch=None) -> np.ndarray:
        theta = check_param_vector(theta, self.p, name="theta")
        return np.diag(3.0 * self.c_diag * theta**2)

    def hvp(self, theta, v, batch=None) -> np.ndarray:
        theta = check_param_vector(theta, self.p, name="theta")
        return 3.0 * self.c_diag * theta**2 * np.asarray(v, dtype=np.float64)


def quartic_objective(c_diag) -> QuarticObjective:
    """Diagonal quartic; curvature varies with theta, so Taylor residuals are visible."""
    return QuarticObjective(c_diag)


@dataclass(frozen=True)
class ToyLandscape2D:
    """Parameters of the two-well surface.

    Defaults give one sharp well (width ``s1``) at ``c1`` and one wide well
    (width ``s2``) at ``c2``, plus a weak quadratic confinement ``kappa`` so
    that gradient flow from anywhere ends in one of the two basins.
    """

    c1: tuple = (-2.0, 0.0)
    c2: tuple = (2.0, 0.0)
    a1: float = 1.0
    a2: float = 1.0
    s1: float = 0.3
    s2: float = 1.5
    kappa: float = 0.01

    def __post_init__(self):
        if not (0 < self.s1 < self.s2):
            raise ValueError(f"need 0 < s1 < s2, got s1={self.s1}, s2={self.s2}")
        if min(self.a1, self.a2) <= 0 or self.kappa < 0:
            raise ValueError("well depths must be positive and kappa nonnegative")


class ToyLandscapeObjective(Objective):
    """L(x) = -a1*exp(-|x-c1|^2/(2 s1^2)) - a2*exp(-|x-c2|^2/(2 s2^2)) + kappa*|x|^2."""

    p = 2

    def __init__(self, params: ToyLandscape2D):
        self.params = params
        self._centers = np.array([params.c1, params.c2], dtype=np.float64)
        self._depths = np.array([params.a1, params.a2], dtype=np.float64)
        self._widths = np.array([params.s1, params.s2], dtype=np.float64)

    def _wells(self, x):
        # x: (..., 2) -> per-well exp factor, shape (..., 2)
        diff = x[..., None, :] - self._centers  # (..., 2 wells, 2)
        q = np.sum(diff * diff, axis=-1) / (2.0 * self._widths**2)
        return np.exp(-q), diff

    def value(self, theta, batch=None) -> float:
        theta = check_param_vector(theta, 2, name="theta")
        return float(self.value_batch(theta[None, :])[0])

    def value_batch(self, thetas, batch=None) -> np.ndarray:
        x = np.asarray(thetas, dtype=np.float64)
        expq, _ = self._wells(x)
        wells = -np.sum(self._depths * expq, axis=-1)
        return wells + self.params.kappa * np.sum(x * x, axis=-1)

    def gradient(self, theta, batch=None) -> np.ndarray:
        theta = check_param_vector(theta, 2, name="theta")
        return self.gradient_batch(theta[None, :])[0]

    def gradient_batch(self, thetas) -> np.ndarray:
        x = np.asarray(thetas, dtype=np.float64)
        expq, diff = self._wells(x)
        # d/dx of -a*exp(-q) is a*exp(-q)*(x-c)/s^2
        coeff = self._depths * expq / self._widths**2  # (..., 2)
        grad = np.sum(coeff[..., None] * diff, axis=-2)
        return grad + 2.0 * self.params.kappa * x

    def hessian(self, theta, batch=None) -> np.ndarray:
        x = check_param_vector(theta, 2, name="theta")
        expq, diff = self._wells(x[None, :])
        expq, diff = expq[0], diff[0]
        H = 2.0 * self.params.kappa * np.eye(2)
        for k in range(2):
            u = diff[k] / self._widths[k] ** 2
            H += self._depths[k] * expq[k] * (np.eye(2) / self._widths[k] ** 2 - np.outer(u, u))
        return H

    def hvp(self, theta, v, batch=None) -> np.ndarray:
        return self.hessian(theta) @ np.asarray(v, dtype=np.float64)

    def minima(self, newton_steps: int = 60) -> np.ndarray:
        """Newton-polished locations of the sharp and wide minima, shape (2, 2)."""
        out = []
        for c in self._centers:
            x = c.copy()
            for _ in range(newton_steps):
                x = x - np.linalg.solve(self.hessian(x), self.gradient(x))
            out.append(x)
        return np.array(out)


def toy_landscape(params: ToyLandscape2D | None = None) -> ToyLandscapeObjective:
    """The two-well 2-d surface with analytic gradient and Hessian."""
    return ToyLandscapeObjective(params or ToyLandscape2D())


def count_grid_minima(objective, bounds=(-4.0, 4.0), resolution=400) -> int:
    """Number of local-minimum basins of a 2-d objective on a dense lattice.

    A lattice point is a candidate when its value is <= all of its 8
    neighbors (border points are never counted); candidates that touch
    (value ties straddling a symmetry line produce adjacent candidates) are
    merged into one basin via connected components.
    """
    from scipy import ndimage

    if objective.p != 2:
        raise DimensionTooLarge("grid minima counting is only defined for p = 2")
    lo, hi = bounds
    axis = np.linspace(lo, hi, resolution)
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    grid = np.stack([xx.ravel(), yy.ravel()], axis=-1)
    values = objective.value_batch(grid).reshape(resolution, resolution)
    center = values[1:-1, 1:-1]
    is_min = np.ones_like(center, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            neighbor = values[1 + di : resolution - 1 + di, 1 + dj : resolution - 1 + dj]
            is_min &= center <= neighbor
    _, count = ndimage.label(is_min, structure=np.ones((3, 3), dtype=int))
    return int(count)


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    return expz / expz.sum(axis=1, keepdims=True)


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class MLPObjective(Objective):
    """Fully-connected tanh network with label-smoothed cross-entropy loss.

    ``widths`` lists the layer sizes including input and output, e.g.
    ``(2, 16, 2)``. Parameters live in one flat vector (weights then bias,
    layer by layer); ``init_params`` draws a deterministic Xavier start.
    """

    def __init__(self, widths, label_smoothing: float = 0.0):
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ShapeMismatch(f"need at least input and output widths >= 1, got {widths}")
        if not 0.0 <= label_smoothing < 1.0:
            raise ValueError(f"label_smoothing must be in [0, 1), got {label_smoothing}")
        self.widths = widths
        self.num_classes = widths[-1]
        self.label_smoothing = float(label_smoothing)
        self._shapes = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            self._shapes.append((fan_in, fan_out))
        self.p = sum(fi * fo + fo for fi, fo in self._shapes)

    # -- parameter packing ------------------------------------------------

    def unpack(self, theta):
        theta = check_param_vector(theta, self.p, name="theta")
        weights, biases, pos = [], [], 0
        for fan_in, fan_out in self._shapes:
            weights.append(theta[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out))
            pos += fan_in * fan_out
            biases.append(theta[pos : pos + fan_out])
            pos += fan_out
        return weights, biases

    def pack(self, weights, biases) -> np.ndarray:
        parts = []
        for w, b in zip(weights, biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def init_params(self, seed: int, stream: int = STREAM_INIT) -> np.ndarray:
        """Xavier-normal weights, zero biases; deterministic per seed."""
        gen = philox_generator(seed, stream)
        weights, biases = [], []
        for fan_in, fan_out in self._shapes:
            scale = np.sqrt(2.0 / (fan_in + fan_out))
            weights.append(scale * gen.standard_normal((fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return self.pack(weights, biases)

    # -- forward / backward ------------------------------------------------

    def _check_batch(self, batch):
        if batch is None:
            raise ShapeMismatch("MLP objective needs a (inputs, labels) batch")
        x, y = batch
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y)
        if x.ndim != 2 or x.shape[1] != self.widths[0]:
            raise ShapeMismatch(
                f"inputs must have shape (n, {self.widths[0]}), got {x.shape}"
            )
        if y.shape != (x.shape[0],):
            raise ShapeMismatch(f"labels must have shape ({x.shape[0]},), got {y.shape}")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ShapeMismatch(
                f"labels must lie in [0, {self.num_classes}), got range [{y.min()}, {y.max()}]"
            )
        return x, y

    def _forward(self, theta, x):
        weights, biases = self.unpack(theta)
        activations = [x]
        out = x
        last = len(weights) - 1
        for l, (w, b) in enumerate(zip(weights, biases)):
            out = out @ w + b
            if l != last:
                out = np.tanh(out)
            activations.append(out)
        return weights, activations  # activations[-1] are logits

    def logits(self, theta, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.widths[0]:
            raise ShapeMismatch(f"inputs must have shape (n, {self.widths[0]}), got {x.shape}")
        return self._forward(theta, x)[1][-1]

    def _smoothed_targets(self, y, n):
        ls, k = self.label_smoothing, self.num_classes
        targets = np.full((n, k), ls / k)
        targets[np.arange(n), y] += 1.0 - ls
        return targets

    def per_example_losses(self, theta, batch) -> np.ndarray:
        x, y = self._check_batch(batch)
        logp = _log_softmax(self._forward(theta, x)[1][-1])
        targets = self._smoothed_targets(y, x.shape[0])
        return -np.sum(targets * logp, axis=1)

    def value(self, theta, batch=None) -> float:
        return float(np.mean(self.per_example_losses(theta, batch)))

    def _backward(self, theta, batch, per_example: bool):
        x, y = self._check_batch(batch)
        n = x.shape[0]
        weights, activations = self._forward(theta, x)
        probs = softmax(activations[-1])
        delta = probs - self._smoothed_targets(y, n)  # (n, k), per-example loss grads
        num_layers = len(weights)
        if per_example:
            rows = [np.empty(0)] * (2 * num_layers)
            for l in range(num_layers - 1, -1, -1):
                rows[2 * l] = np.einsum("ni,nj->nij", activations[l], delta).reshape(n, -1)
                rows[2 * l + 1] = delta
                if l > 0:
                    delta = (delta @ weights[l].T) * (1.0 - activations[l] ** 2)
            return np.concatenate(rows, axis=1)
        parts = [np.empty(0)] * (2 * num_layers)
        for l in range(num_layers - 1, -1, -1):
            parts[2 * l] = (activations[l].T @ delta).ravel() / n
            parts[2 * l + 1] = delta.sum(axis=0) / n
            if l > 0:
                delta = (delta @ weights[l].T) * (1.0 - activations[l] ** 2)
        return np.concatenate(parts)

    def gradient(self, theta, batch=None) -> np.ndarray:
        return self._backward(theta, batch, per_example=False)

    def per_example_gradients(self, theta, batch=None) -> np.ndarray:
        return self._backward(theta, batch, per_example=True)

    def accuracy(self, theta, batch) -> float:
        x, y = self._check_batch(batch)
        pred = np.argmax(self._forward(theta, x)[1][-1], axis=1)
        return float(np.mean(pred == y))


def mlp_objective(widths, label_smoothing: float = 0.0) -> MLPObjective:
    """Tanh MLP objective; see :class:`MLPObjective`."""
    return MLPObjective(widths, label_smoothing)


def smoothed_cross_entropy_floor(label_smoothing: float, num_classes: int) -> float:
    """Minimum attainable label-smoothed cross-entropy for one example.

    The per-example loss is minimized when the softmax output equals the
    smoothed target, so the floor is the entropy of that target distribution.
    """
    ls, k = label_smoothing, num_classes
    target_correct = 1.0 - ls + ls / k
    target_other = ls / k
    floor = -target_correct * np.log(target_correct)
    if k > 1 and target_other > 0.0:
        floor -= (k - 1) * target_other * np.log(target_other)
    return float(floor)
