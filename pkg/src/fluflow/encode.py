"""Mirror-symmetric autoencoder with a low-dimensional bottleneck.

The network compresses a completed, standardized panel row into a short
code.  Hidden layers use ReLU; the bottleneck and output layers are
identity so codes and reconstructions live on an unrestricted scale.
Training is plain mini-batch gradient descent, which keeps every update
auditable: no momentum state, no adaptive scaling.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError, TrainingError
from .rng import stream_rng

FORMAT_TAG = "fluflow-autoencoder v1"


def geometric_layer_schedule(input_dim, bottleneck, n_hidden):
    """Layer widths shrinking geometrically from input_dim to bottleneck.

    Width i is round(input_dim * r**i) with r = (bottleneck/input_dim) **
    (1/(n_hidden+1)); the last width is forced to the exact bottleneck.
    Raises DomainError when the rounded sequence is not strictly
    decreasing (for example when bottleneck == input_dim).
    """
    if input_dim < 1 or bottleneck < 1:
        raise DomainError("input_dim and bottleneck must be positive")
    if bottleneck > input_dim:
        raise DomainError("bottleneck cannot exceed input_dim")
    if n_hidden < 0:
        raise DomainError("n_hidden must be non-negative")
    ratio = (bottleneck / input_dim) ** (1.0 / (n_hidden + 1))
    sizes = [int(math.floor(input_dim * ratio**i + 0.5)) for i in range(n_hidden + 2)]
    sizes[-1] = int(bottleneck)
    if any(b >= a for a, b in zip(sizes, sizes[1:])):
        raise DomainError("layer schedule %s is not strictly decreasing" % (sizes,))
    return tuple(sizes)


@dataclass(frozen=True)
class AutoencoderSpec:
    """Architecture and training knobs; layer_sizes runs input -> bottleneck."""

    layer_sizes: tuple
    seed: int = 0
    epochs: int = 2000
    batch_size: int = 32
    learning_rate: float = 0.05

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        if len(sizes) < 2:
            raise ShapeError("layer_sizes needs at least input and bottleneck")
        if any(s < 1 for s in sizes):
            raise DomainError("layer sizes must be positive")
        if any(b >= a for a, b in zip(sizes, sizes[1:])):
            raise DomainError("layer_sizes must be strictly decreasing")
        if self.epochs < 1 or self.batch_size < 1:
            raise DomainError("epochs and batch_size must be at least 1")
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise DomainError("learning_rate must be positive")
        object.__setattr__(self, "layer_sizes", sizes)

    @property
    def bottleneck(self):
        return self.layer_sizes[-1]


def _chain(layer_sizes):
    # full width sequence: encoder sizes then mirrored decoder sizes
    sizes = list(layer_sizes)
    return sizes + sizes[-2::-1]


def _activation_layers(layer_sizes):
    # weight indices whose output is identity: bottleneck and final output
    chain = _chain(layer_sizes)
    return len(layer_sizes) - 2, len(chain) - 2


def init_parameters(layer_sizes, seed):
    """Uniform(-s, s) weights with s = sqrt(6 / (fan_in + fan_out)), zero biases."""
    chain = _chain(layer_sizes)
    rng = stream_rng(seed, "init")
    weights, biases = [], []
    for fan_in, fan_out in zip(chain[:-1], chain[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def _forward(layer_sizes, weights, biases, X):
    """Returns (activations per layer, output); activations[0] is X."""
    code_layer, out_layer = _activation_layers(layer_sizes)
    h = X
    acts = [X]
    for l, (W, b) in enumerate(zip(weights, biases)):
        z = h @ W + b
        h = z if l in (code_layer, out_layer) else np.maximum(z, 0.0)
        acts.append(h)
    return acts, h


def reconstruction_loss(layer_sizes, weights, biases, X):
    """Mean squared reconstruction error per region, averaged over columns."""
    _, out = _forward(layer_sizes, weights, biases, X)
    return float(np.mean((out - X) ** 2))


def loss_and_gradients(layer_sizes, weights, biases, X):
    """Loss plus exact gradients for every weight matrix and bias vector."""
    code_layer, out_layer = _activation_layers(layer_sizes)
    acts, out = _forward(layer_sizes, weights, biases, X)
    n, d = X.shape
    loss = float(np.mean((out - X) ** 2))
    grad = 2.0 * (out - X) / (n * d)
    g_w = [None] * len(weights)
    g_b = [None] * len(weights)
    for l in range(len(weights) - 1, -1, -1):
        g_w[l] = acts[l].T @ grad
        g_b[l] = grad.sum(axis=0)
        if l > 0:
            grad = grad @ weights[l].T
            if (l - 1) not in (code_layer, out_layer):
                grad = grad * (acts[l] > 0)
    return loss, g_w, g_b


@dataclass(frozen=True)
class TrainedAutoencoder:
    """Frozen parameters of a trained network.

    history[0] is the loss before any update; history[e] the full-batch
    loss after epoch e.  final_loss == history[-1].
    """

    layer_sizes: tuple
    weights: tuple
    biases: tuple
    final_loss: float
    history: tuple
    seed: int

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        chain = _chain(sizes)
        weights = tuple(np.array(W, dtype=float) for W in self.weights)
        biases = tuple(np.array(b, dtype=float) for b in self.biases)
        if len(weights) != len(chain) - 1 or len(biases) != len(weights):
            raise ShapeError("parameter count does not match the layer schedule")
        for l, (W, b) in enumerate(zip(weights, biases)):
            if W.shape != (chain[l], chain[l + 1]) or b.shape != (chain[l + 1],):
                raise ShapeError("layer %d parameters do not match widths %s" % (l, chain))
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise DomainError("non-finite parameter in layer %d" % l)
        for arr in weights + biases:
            arr.setflags(write=False)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def bottleneck(self):
        return self.layer_sizes[-1]

    @property
    def input_dim(self):
        return self.layer_sizes[0]


def train_autoencoder(X, spec):
    """Fit the network to reconstruct X.

    X must be fully observed (complete first) with at least batch_size
    rows.  Batches follow a seed-determined shuffle each epoch, so equal
    seeds give bitwise-equal parameters.  Raises TrainingError when the
    loss explodes past 1e6 times its initial value.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ShapeError("training data must be a 2-d matrix")
    if not np.all(np.isfinite(X)):
        raise DomainError("training data has non-finite entries; complete the panel first")
    n, d = X.shape
    if d != spec.layer_sizes[0]:
        raise ShapeError("data width %d does not match input layer %d" % (d, spec.layer_sizes[0]))
    if n < spec.batch_size:
        raise DomainError("need at least batch_size=%d rows, found %d" % (spec.batch_size, n))

    weights, biases = init_parameters(spec.layer_sizes, spec.seed)
    rng = stream_rng(spec.seed, "shuffle")
    initial = reconstruction_loss(spec.layer_sizes, weights, biases, X)
    history = [initial]
    blowup = 1e6 * max(initial, 1e-12)
    lr = spec.learning_rate
    for _ in range(spec.epochs):
        order = rng.permutation(n)
        for start in range(0, n, spec.batch_size):
            batch = X[order[start : start + spec.batch_size]]
            _, g_w, g_b = loss_and_gradients(spec.layer_sizes, weights, biases, batch)
            for l in range(len(weights)):
                weights[l] -= lr * g_w[l]
                biases[l] -= lr * g_b[l]
        loss = reconstruction_loss(spec.layer_sizes, weights, biases, X)
        history.append(loss)
        if not math.isfinite(loss) or loss > blowup:
            raise TrainingError(
                "training diverged at epoch %d (loss %.3g); lower the learning rate" % (len(history) - 1, loss)
            )
    return TrainedAutoencoder(
        layer_sizes=spec.layer_sizes,
        weights=tuple(weights),
        biases=tuple(biases),
        final_loss=history[-1],
        history=tuple(history),
        seed=spec.seed,
    )


def encode(model, rows):
    """Map rows through the encoder half to bottleneck codes."""
    rows = np.asarray(rows, dtype=float)
    single = rows.ndim == 1
    if single:
        rows = rows[None, :]
    if rows.ndim != 2 or rows.shape[1] != model.input_dim:
        raise ShapeError("rows must have width %d" % model.input_dim)
    if not np.all(np.isfinite(rows)):
        raise DomainError("non-finite input row")
    code_layer = len(model.layer_sizes) - 2
    h = rows
    for l in range(len(model.layer_sizes) - 1):
        z = h @ model.weights[l] + model.biases[l]
        h = z if l == code_layer else np.maximum(z, 0.0)
    return h[0] if single else h


def reconstruct(model, rows):
    """Full encode-decode pass."""
    rows = np.asarray(rows, dtype=float)
    single = rows.ndim == 1
    if single:
        rows = rows[None, :]
    _, out = _forward(model.layer_sizes, model.weights, model.biases, rows)
    return out[0] if single else out


def encoder_jacobians(model, rows):
    """d code / d input for each row; shape (n, bottleneck, input_dim).

    The ReLU pattern is frozen at each row's forward pass, so the result
    is the exact Jacobian almost everywhere.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != model.input_dim:
        raise ShapeError("rows must be (n, %d)" % model.input_dim)
    code_layer = len(model.layer_sizes) - 2
    h = rows
    masks = []
    for l in range(len(model.layer_sizes) - 1):
        z = h @ model.weights[l] + model.biases[l]
        if l == code_layer:
            h = z
            masks.append(None)
        else:
            h = np.maximum(z, 0.0)
            masks.append(z > 0)
    n = rows.shape[0]
    k = model.bottleneck
    jac = np.broadcast_to(np.eye(k), (n, k, k)).copy()
    for l in range(code_layer, -1, -1):
        # masks[l] gates the output of weights[l], so it applies before
        # the chain rule steps back through that weight matrix
        if masks[l] is not None:
            jac = jac * masks[l][:, None, :]
        jac = jac @ model.weights[l].T
    return jac


# ===================================================================
# bottleneck selection
# ===================================================================

def bic(n, k, loss):
    """Information criterion ln(n) * k + 2 * n * loss; lower is better."""
    if n < 1:
        raise DomainError("n must be at least 1")
    if k < 1:
        raise DomainError("k must be at least 1")
    if not (loss >= 0 and math.isfinite(loss)):
        raise DomainError("loss must be finite and non-negative")
    return math.log(n) * k + 2.0 * n * loss


def select_bottleneck(X, candidates, n_hidden=1, seed=0, epochs=2000, batch_size=32, learning_rate=0.05):
    """Train one autoencoder per candidate width and pick the BIC minimizer.

    Returns (best_k, table) where table rows are (k, final_loss, bic) in
    ascending k order.  Ties go to the smaller k.
    """
    candidates = sorted(set(int(k) for k in candidates))
    if not candidates:
        raise DomainError("candidate list is empty")
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    table = []
    best_k, best_bic = None, math.inf
    for k in candidates:
        spec = AutoencoderSpec(
            layer_sizes=geometric_layer_schedule(d, k, n_hidden),
            seed=seed,
            epochs=epochs,
            batch_size=batch_size,
            learning_rate=learning_rate,
        )
        model = train_autoencoder(X, spec)
        score = bic(n, k, model.final_loss)
        table.append((k, model.final_loss, score))
        if score < best_bic:
            best_k, best_bic = k, score
    return best_k, tuple(table)


# ===================================================================
# persistence
# ===================================================================

def save_autoencoder(model, path):
    """Versioned binary: text header, then little-endian float64 parameters."""
    header = "%s\nsizes: %s\nseed: %d\nfinal_loss: %.17g\n\n" % (
        FORMAT_TAG,
        ",".join(str(s) for s in model.layer_sizes),
        model.seed,
        model.final_loss,
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        for W, b in zip(model.weights, model.biases):
            fh.write(W.astype("<f8").tobytes(order="C"))
            fh.write(b.astype("<f8").tobytes(order="C"))


def load_autoencoder(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise ShapeError("%s: missing header terminator" % path)
    lines = blob[:sep].decode("ascii", errors="replace").splitlines()
    if not lines or lines[0] != FORMAT_TAG:
        raise ShapeError("%s: not a %s file" % (path, FORMAT_TAG))
    fields = {}
    for line in lines[1:]:
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    try:
        sizes = tuple(int(s) for s in fields["sizes"].split(","))
        seed = int(fields["seed"])
        final_loss = float(fields["final_loss"])
    except (KeyError, ValueError):
        raise ShapeError("%s: malformed header" % path) from None
    raw = np.frombuffer(blob[sep + 2 :], dtype="<f8")
    chain = _chain(sizes)
    expected = sum(chain[l] * chain[l + 1] + chain[l + 1] for l in range(len(chain) - 1))
    if raw.size != expected:
        raise ShapeError("%s: expected %d parameters, found %d" % (path, expected, raw.size))
    weights, biases = [], []
    pos = 0
    for l in range(len(chain) - 1):
        size = chain[l] * chain[l + 1]
        weights.append(raw[pos : pos + size].reshape(chain[l], chain[l + 1]).copy())
        pos += size
        biases.append(raw[pos : pos + chain[l + 1]].copy())
        pos += chain[l + 1]
    return TrainedAutoencoder(
        layer_sizes=sizes,
        weights=tuple(weights),
        biases=tuple(biases),
        final_loss=final_loss,
        history=(),
        seed=seed,
    )
