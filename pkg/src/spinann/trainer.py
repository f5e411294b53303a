"""Offline trainer for the two-layer feed-forward recognizer.

Supports four neuron transfer functions: ideal step, saturating linear,
logistic sigmoid, and the simulated spin-neuron curve. The spin-neuron
activation is the device transfer sampled into a monotone lookup table,
so training and hardware inference share one ground truth; its net input
is a dimensionless weighted sum scaled by a drive current (the current
that a unit net input programs into the neuron).

Training is plain full-batch gradient descent with momentum on a mean
squared error against one-hot targets, with straight-through surrogate
gradients for the discontinuous step function. The threshold term of
each neuron is an extra always-on input row, which later maps onto a
crossbar row like any other synapse.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .crossbar import ConductanceRange
from .device import NeuronDevice
from .errors import ConfigError, DomainError, SearchError

WEIGHTS_SCHEMA = "spin-ann/1"

STT_TABLE_NODES = 1024


@dataclass(frozen=True, eq=False)
class TransferKind:
    """Neuron activation selector, with device data for the spin neuron.

    For the spin neuron the table maps programming current to the
    normalized sensed output (V - v_min)/(v_max - v_min): exactly 0 up
    to the depinning threshold th1, exactly 1 at the full-travel current
    th2, continuous and nondecreasing between. drive_current converts
    the trainer's dimensionless net input into a programming current.
    """

    tag: str
    th1: float = 0.0
    th2: float = 0.0
    v_min: float = 0.0
    v_max: float = 0.0
    drive_current: float = 0.0
    i_nodes: np.ndarray | None = None
    a_nodes: np.ndarray | None = None

    def __post_init__(self):
        if self.tag not in ("step", "sat_linear", "sigmoid", "stt_snn"):
            raise ConfigError(f"unknown transfer kind {self.tag!r}")
        if self.tag == "stt_snn":
            if not (self.th2 > self.th1 > 0.0):
                raise ConfigError("need th2 > th1 > 0")
            if not (self.v_max > self.v_min):
                raise ConfigError("need v_max > v_min")
            if self.drive_current <= 0.0:
                raise ConfigError("drive_current must be positive")
            if self.i_nodes is None or self.a_nodes is None:
                raise ConfigError("spin-neuron kind needs its sampled table")

    @classmethod
    def step(cls) -> "TransferKind":
        return cls("step")

    @classmethod
    def sat_linear(cls) -> "TransferKind":
        return cls("sat_linear")

    @classmethod
    def sigmoid(cls) -> "TransferKind":
        return cls("sigmoid")

    @classmethod
    def stt_snn(
        cls,
        device: NeuronDevice | None = None,
        t_prog: float = 1e-9,
        drive_current: float | None = None,
        n_nodes: int = STT_TABLE_NODES,
    ) -> "TransferKind":
        """Sample the simulated neuron transfer into a lookup table.

        Nodes are 0 plus a uniform grid over [th1, th2]; between nodes
        the activation is linearly interpolated. drive_current defaults
        to th2, so a net input of 1.0 saturates the neuron.
        """
        device = device or NeuronDevice()
        th1 = device.depinning_current
        th2 = device.saturation_current(t_prog)
        v_min = device.v_out_min
        v_max = device.v_out_max
        i_nodes = np.concatenate(([0.0], np.linspace(th1, th2, n_nodes - 1)))
        volts = np.array([device.transfer(i, t_prog) for i in i_nodes])
        a_nodes = (volts - v_min) / (v_max - v_min)
        a_nodes = np.maximum.accumulate(np.clip(a_nodes, 0.0, 1.0))
        a_nodes[i_nodes <= th1] = 0.0
        a_nodes[-1] = 1.0
        return cls(
            tag="stt_snn",
            th1=th1,
            th2=th2,
            v_min=v_min,
            v_max=v_max,
            drive_current=drive_current if drive_current is not None else th2,
            i_nodes=i_nodes,
            a_nodes=a_nodes,
        )

    def to_dict(self) -> dict:
        doc = {"tag": self.tag}
        if self.tag == "stt_snn":
            doc.update(
                th1_a=self.th1,
                th2_a=self.th2,
                v_min_v=self.v_min,
                v_max_v=self.v_max,
                drive_current_a=self.drive_current,
                i_nodes_a=self.i_nodes.tolist(),
                a_nodes=self.a_nodes.tolist(),
            )
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "TransferKind":
        if doc["tag"] != "stt_snn":
            return cls(doc["tag"])
        return cls(
            tag="stt_snn",
            th1=doc["th1_a"],
            th2=doc["th2_a"],
            v_min=doc["v_min_v"],
            v_max=doc["v_max_v"],
            drive_current=doc["drive_current_a"],
            i_nodes=np.array(doc["i_nodes_a"]),
            a_nodes=np.array(doc["a_nodes"]),
        )


def stt_transfer(i, kind: TransferKind):
    """Normalized spin-neuron activation for programming current(s) i."""
    if kind.tag != "stt_snn":
        raise ConfigError("stt_transfer needs the stt_snn kind")
    out = np.interp(np.asarray(i, dtype=float), kind.i_nodes, kind.a_nodes)
    return out if out.ndim else float(out)


def _activation_array(z: np.ndarray, kind: TransferKind) -> np.ndarray:
    if kind.tag == "step":
        return np.where(z > 0.0, 1.0, 0.0)
    if kind.tag == "sat_linear":
        return np.clip(z, 0.0, 1.0)
    if kind.tag == "sigmoid":
        e = np.exp(-np.abs(z))  # bounded by 1, no overflow either side
        return np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.interp(z * kind.drive_current, kind.i_nodes, kind.a_nodes)


def activation(z, kind: TransferKind, slope: float = 1.0):
    """Activation value for dimensionless net input(s) z.

    slope is the step surrogate steepness and is unused by other kinds.
    """
    out = _activation_array(np.asarray(z, dtype=float), kind)
    return out if out.ndim else float(out)


def activation_derivative(z, kind: TransferKind, slope: float = 1.0):
    """Derivative (or surrogate derivative) of activation at z.

    step: straight-through surrogate, equal to slope on the window
    |z| <= 1/(2*slope) (a unit-area rectangle) and 0 outside.
    stt_snn: exact piecewise slope of the lookup table scaled by the
    drive current, zero at and outside the two thresholds.
    """
    z = np.asarray(z, dtype=float)
    if kind.tag == "step":
        out = np.where(np.abs(z) <= 0.5 / slope, slope, 0.0)
    elif kind.tag == "sat_linear":
        out = np.where((z > 0.0) & (z < 1.0), 1.0, 0.0)
    elif kind.tag == "sigmoid":
        a = _activation_array(z, kind)
        out = a * (1.0 - a)
    else:
        i = z * kind.drive_current
        segment = np.clip(
            np.searchsorted(kind.i_nodes, i, side="right") - 1,
            0, len(kind.i_nodes) - 2)
        slopes = np.diff(kind.a_nodes) / np.diff(kind.i_nodes)
        inside = (i > kind.th1) & (i < kind.th2)
        out = np.where(inside, slopes[segment] * kind.drive_current, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    weight_clip bounds every weight, threshold rows included; keep it
    above the spin neuron's upper threshold in net-input units (1.0 at
    the default drive current) or the threshold rows cannot hold the
    neurons in their active window.
    """

    learning_rate: float = 0.5
    epochs: int = 3000
    seed: int = 0
    target_accuracy: float = 1.0
    weight_clip: float = 1.0
    surrogate_slope: float = 1.0
    momentum: float = 0.9
    init_low: float = -0.25
    init_high: float = 0.25
    # Teaching values for the one-hot targets. Saturating transfers have
    # zero gradient at their rails, so aiming slightly inside the rails
    # keeps the optimum in gradient-carrying territory.
    target_low: float = 0.0
    target_high: float = 1.0
    # Dead-neuron recovery for bounded-gradient transfers: a neuron
    # whose net input leaves the active window for every sample can
    # never return by gradient alone. Each epoch such a neuron's
    # threshold row moves this far back toward the window and its input
    # weights decay by the same fraction, so the threshold row always
    # wins eventually (0 disables).
    revive_rate: float = 0.01
    # Error weight on the high-target (own-class) entries. One-hot
    # targets are dominated by zeros; weighting the single positive
    # entry rebalances up- and down-pressure on the output layer. 1
    # keeps plain unweighted error.
    positive_weight: float = 1.0
    # Adaptive step-size control: accepted steps that reduce the loss
    # scale the rate by lr_up; steps that raise it by more than the
    # loss_spike ratio are discarded, the rate shrinks by lr_down and
    # the momentum memory is cleared. Keeps updates small enough that
    # neurons are not flung across their active window.
    adaptive_lr: bool = False
    lr_up: float = 1.05
    lr_down: float = 0.7
    loss_spike: float = 1.04
    # Plateau escape: when the best loss has not improved for
    # kick_patience epochs, jitter all weights by a fan-in-scaled
    # uniform perturbation of half-width kick_scale, clear the momentum
    # memory and restore the initial learning rate. Deterministic per
    # seed; 0 disables.
    kick_patience: int = 0
    kick_scale: float = 0.1
    # Margin polish: keep training this many extra epochs after the
    # accuracy target is first met and return the snapshot with the
    # widest decision margin among the most accurate epochs seen.
    # Widens the winner-vs-runner-up gap, which is what survives weight
    # quantization and device variation. 0 returns the weights from the
    # first convergent epoch.
    polish_epochs: int = 0
    # Margin hinge on output net inputs: each sample whose own-class
    # net input fails to beat the runner-up's by margin_target
    # contributes an extra error pushing the two apart, scaled by
    # margin_weight. Acting on net inputs rather than activations lets
    # the push continue through saturated regions, where the weight
    # grid and device variation still move the net input. 0 disables.
    margin_target: float = 0.0
    margin_weight: float = 1.0
    # Noise-aware training: multiplicative Gaussian jitter of this
    # relative width on every forward-pass weight, fresh each epoch.
    # Mirrors programmed-conductance variation, steering the optimizer
    # toward configurations whose decisions survive it. When active,
    # snapshots are ranked by performance on a fixed ensemble of
    # noise_ensemble deterministic perturbations instead of the clean
    # margin alone. 0 disables.
    train_sigma: float = 0.0
    noise_ensemble: int = 8
    # Hidden rail pressure: while the batch classifies perfectly, push
    # hidden net inputs that linger inside the active window (plus
    # rail_margin of clearance on both sides) toward the nearest
    # saturated rail. Saturated hidden codes sit on the flat parts of
    # the transfer where conductance noise cannot move the activation;
    # the pressure lifts whenever it would cost accuracy. 0 disables.
    rail_weight: float = 0.0
    rail_margin: float = 0.1
    # Optimize the first layer in mean-removed input coordinates.
    # All-positive feature vectors share a large common component that
    # makes their gradient directions nearly collinear; removing the
    # batch mean during the weight updates conditions the problem. The
    # shift is folded exactly into the returned threshold row, so the
    # trained weights still act on raw features.
    center_inputs: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0.0 or self.epochs <= 0:
            raise ConfigError("learning_rate and epochs must be positive")
        if not (0.0 < self.target_accuracy <= 1.0):
            raise ConfigError("target_accuracy must be in (0, 1]")
        if self.weight_clip <= 0.0 or self.surrogate_slope <= 0.0:
            raise ConfigError("weight_clip and surrogate_slope must be positive")
        if not (0.0 <= self.momentum < 1.0):
            raise ConfigError("momentum must be in [0, 1)")
        if self.init_low >= self.init_high:
            raise ConfigError("need init_low < init_high")
        if not (0.0 <= self.target_low < self.target_high <= 1.0):
            raise ConfigError("need 0 <= target_low < target_high <= 1")
        if self.revive_rate < 0.0:
            raise ConfigError("revive_rate must be >= 0")
        if self.positive_weight <= 0.0:
            raise ConfigError("positive_weight must be positive")
        if self.lr_up < 1.0 or not (0.0 < self.lr_down < 1.0):
            raise ConfigError("need lr_up >= 1 and 0 < lr_down < 1")
        if self.loss_spike < 1.0:
            raise ConfigError("loss_spike must be >= 1")
        if self.kick_patience < 0 or self.kick_scale <= 0.0:
            raise ConfigError("need kick_patience >= 0 and kick_scale > 0")
        if self.polish_epochs < 0:
            raise ConfigError("polish_epochs must be >= 0")
        if self.margin_target < 0.0 or self.margin_weight <= 0.0:
            raise ConfigError("need margin_target >= 0 and margin_weight > 0")
        if self.rail_weight < 0.0 or self.rail_margin < 0.0:
            raise ConfigError("need rail_weight >= 0 and rail_margin >= 0")
        if self.train_sigma < 0.0 or self.noise_ensemble < 1:
            raise ConfigError("need train_sigma >= 0 and noise_ensemble >= 1")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix [n_samples x n_features] with integer class labels."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        object.__setattr__(self, "features",
                           np.asarray(self.features, dtype=float))
        object.__setattr__(self, "labels",
                           np.asarray(self.labels, dtype=int))
        if self.features.ndim != 2 or len(self.features) == 0:
            raise DomainError("dataset must be a non-empty 2-D feature matrix")
        if self.labels.shape != (len(self.features),):
            raise DomainError("one label per sample required")
        if self.n_classes < 1:
            raise DomainError("need at least one class")
        if np.any((self.labels < 0) | (self.labels >= self.n_classes)):
            raise DomainError("labels must lie in [0, n_classes)")

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def one_hot(self) -> np.ndarray:
        t = np.zeros((len(self.labels), self.n_classes))
        t[np.arange(len(self.labels)), self.labels] = 1.0
        return t


@dataclass(eq=False)
class TrainResult:
    """Trained float weights plus the run's bookkeeping.

    w1 is [(n_features + 1) x n_hidden], w2 [(n_hidden + 1) x n_classes];
    the final row of each is the always-on threshold row.
    """

    w1: np.ndarray
    w2: np.ndarray
    kind: TransferKind
    config: TrainConfig
    accuracy: float
    converged: bool
    epochs_run: int
    history: np.ndarray  # rows of (epoch, loss, accuracy)

    @property
    def n_hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[1]

    @property
    def n_features(self) -> int:
        return self.w1.shape[0] - 1


def _augment(x: np.ndarray) -> np.ndarray:
    return np.hstack([x, np.ones((len(x), 1))])


def _active_window(kind: TransferKind,
                   slope: float) -> tuple[float, float] | None:
    """Net-input interval where the activation carries gradient.

    Outside this interval the (surrogate) derivative is identically
    zero. Returns None for transfers with gradient everywhere.
    """
    if kind.tag == "step":
        half = 0.5 / slope
        return -half, half
    if kind.tag == "sat_linear":
        return 0.0, 1.0
    if kind.tag == "stt_snn":
        return kind.th1 / kind.drive_current, kind.th2 / kind.drive_current
    return None


def _revive_dead_rows(w: np.ndarray, z: np.ndarray,
                      window: tuple[float, float], rate: float) -> None:
    """Pull fully-dead neurons back toward the active window.

    A neuron whose net input is outside the active window for every
    sample has an identically zero gradient and would stay frozen
    forever. Its threshold row gets a fixed nudge back toward the
    window, and its input weights decay toward zero by the same
    fraction; the decay guarantees the threshold row eventually
    dominates the net input, so revival cannot stall against frozen
    input weights. Modifies w in place; neurons with any live sample
    are untouched.
    """
    z_lo, z_hi = window
    dead_low = np.all(z <= z_lo, axis=0)
    dead_high = np.all(z >= z_hi, axis=0)
    dead = dead_low | dead_high
    w[:-1, dead] *= 1.0 - rate
    w[-1, dead_low] += rate
    w[-1, dead_high] -= rate


def _fold_offset(w: np.ndarray, offset: np.ndarray) -> np.ndarray:
    """Rewrite weights acting on (x - offset) to act on raw x."""
    out = w.copy()
    out[-1] = w[-1] - offset @ w[:-1]
    return out


def _unfold_offset(w: np.ndarray, offset: np.ndarray) -> np.ndarray:
    """Inverse of _fold_offset; exact, including on-grid weights."""
    out = w.copy()
    out[-1] = w[-1] + offset @ w[:-1]
    return out


def forward_activations(kind: TransferKind, w1, w2, features, slope=1.0):
    """Layer-by-layer float forward pass; returns (z1, a1, z2, a2)."""
    x = np.atleast_2d(np.asarray(features, dtype=float))
    z1 = _augment(x) @ w1
    a1 = activation(z1, kind, slope)
    z2 = _augment(a1) @ w2
    a2 = activation(z2, kind, slope)
    return z1, a1, z2, a2


def output_activations(result: TrainResult, features) -> np.ndarray:
    """Output-layer activations of the trained float network."""
    _, _, _, a2 = forward_activations(
        result.kind, result.w1, result.w2, features,
        result.config.surrogate_slope)
    return a2


def predict(result: TrainResult, features) -> np.ndarray:
    """Predicted labels; a tied row maximum counts as no decision (-1)."""
    a2 = output_activations(result, features)
    return _strict_argmax(a2)


def _strict_argmax(a2: np.ndarray) -> np.ndarray:
    """Row argmax, or -1 where the maximum is not unique.

    Saturating transfers can pin several outputs to the same rail; a tie
    is a wrong answer, mirroring the hardware readout's tie rule.
    """
    winners = np.argmax(a2, axis=1)
    top = a2[np.arange(len(a2)), winners]
    tied = (a2 == top[:, None]).sum(axis=1) > 1
    return np.where(tied, -1, winners)


def _accuracy(a2: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(_strict_argmax(a2) == labels))


def _margin(a2: np.ndarray, labels: np.ndarray) -> float:
    """Smallest own-class-vs-runner-up activation gap over the batch."""
    idx = np.arange(len(labels))
    own = a2[idx, labels]
    rest = a2.copy()
    rest[idx, labels] = -np.inf
    return float(np.min(own - rest.max(axis=1)))


def _fit(dataset: Dataset, kind: TransferKind, cfg: TrainConfig,
         rng: np.random.Generator, w1: np.ndarray, w2: np.ndarray,
         levels: int | None, snapshot_from_start: bool,
         offset: np.ndarray | None = None) -> TrainResult:
    """Shared gradient-descent engine behind train() and finalize().

    With `levels` set, every forward pass (and the adaptive-rate probe)
    runs through weights snapped to the representable magnitude grid
    while updates accumulate in the float shadow weights, so the
    returned weights lie exactly on the grid (straight-through
    estimator). Snapshot tracking keeps the epoch with the best
    (accuracy, margin) pair; train() arms it once the accuracy target
    is met, finalize() from the first epoch.

    With `offset` set, the first layer is optimized in mean-removed
    input coordinates: w1 enters and leaves in raw form, while updates
    happen on the shifted representation. The weight clip and the
    quantization grid always apply to the raw form, so the returned
    threshold row obeys the same bounds as every other weight.
    """
    if offset is None:
        x = _augment(dataset.features)
    else:
        x = _augment(dataset.features - offset)
        w1 = _unfold_offset(w1, offset)
    targets = dataset.one_hot * (cfg.target_high - cfg.target_low) \
        + cfg.target_low
    err_weight = np.where(dataset.one_hot > 0.0, cfg.positive_weight, 1.0)
    n = len(x)
    n_hidden = w1.shape[1]
    window = _active_window(kind, cfg.surrogate_slope)

    labels = dataset.labels
    idx = np.arange(n)

    def _raw_form(m1):
        return m1 if offset is None else _fold_offset(m1, offset)

    def fwd_weights(m1, m2):
        if levels is None:
            return m1, m2
        q1 = quantize_weights(_raw_form(m1), levels)[0]
        if offset is not None:
            q1 = _unfold_offset(q1, offset)
        return q1, quantize_weights(m2, levels)[0]

    def _clip_layer1(m1):
        """Clip in raw form so the folded threshold row obeys the same
        bound as every other weight, then return to fit coordinates."""
        raw = np.clip(_raw_form(m1), -cfg.weight_clip, cfg.weight_clip)
        return raw if offset is None else _unfold_offset(raw, offset)

    def margin_residual(z_out):
        """Hinge per sample: how far the own-vs-runner-up net-input gap
        falls short of margin_target, and which output is the runner."""
        own = z_out[idx, labels]
        rest = z_out.copy()
        rest[idx, labels] = -np.inf
        runner = np.argmax(rest, axis=1)
        shortfall = np.maximum(
            0.0, cfg.margin_target - (own - rest[idx, runner]))
        return shortfall, runner

    def batch_loss(z_out, a_out):
        loss = float(np.mean(err_weight * (a_out - targets) ** 2))
        if cfg.margin_target > 0.0:
            shortfall, _ = margin_residual(z_out)
            loss += cfg.margin_weight * float(np.mean(shortfall ** 2))
        return loss

    noisy = cfg.train_sigma > 0.0
    if noisy:
        # Frozen perturbation ensemble for snapshot ranking: the same
        # draws every epoch, so ranks compare geometry, not luck.
        ens1 = rng.standard_normal((cfg.noise_ensemble, *w1.shape))
        ens2 = rng.standard_normal((cfg.noise_ensemble, *w2.shape))

    def jitter(m, eps):
        return m * (1.0 + cfg.train_sigma * eps)

    def ensemble_snap(f1, f2, clean_acc):
        """Snapshot key under the frozen ensemble: clean accuracy
        first, then the perfect-classification fraction, then the mean
        worst-pair net-input margin across the perturbed copies."""
        perfect = 0
        margin_sum = 0.0
        for k in range(cfg.noise_ensemble):
            ak1 = activation(x @ jitter(f1, ens1[k]), kind,
                             cfg.surrogate_slope)
            zk2 = _augment(ak1) @ jitter(f2, ens2[k])
            ak2 = activation(zk2, kind, cfg.surrogate_slope)
            perfect += _accuracy(ak2, dataset.labels) == 1.0
            margin_sum += _margin(zk2, dataset.labels)
        return (clean_acc, perfect / cfg.noise_ensemble,
                margin_sum / cfg.noise_ensemble)

    v1 = np.zeros_like(w1)
    v2 = np.zeros_like(w2)
    lr = cfg.learning_rate
    best_loss = np.inf
    best_acc = -1.0
    stalled = 0
    best_snap = None
    polish_left = None
    history = []
    accuracy = 0.0
    converged = False
    epochs_run = 0

    # One measurement per epoch boundary: epoch k's row describes the
    # weights after k updates.
    for epoch in range(cfg.epochs + 1):
        f1, f2 = fwd_weights(w1, w2)
        if noisy:
            # Fresh forward jitter each epoch: gradients are taken on
            # the perturbed network, so descent favors weight
            # configurations whose decisions survive the perturbation.
            e1 = rng.standard_normal(w1.shape)
            e2 = rng.standard_normal(w2.shape)
            n1, n2 = jitter(f1, e1), jitter(f2, e2)
        else:
            n1, n2 = f1, f2
        z1 = x @ n1
        a1 = activation(z1, kind, cfg.surrogate_slope)
        a1_aug = _augment(a1)
        z2 = a1_aug @ n2
        a2 = activation(z2, kind, cfg.surrogate_slope)

        loss = batch_loss(z2, a2)
        if noisy:
            a2_clean = activation(
                _augment(activation(x @ f1, kind, cfg.surrogate_slope))
                @ f2, kind, cfg.surrogate_slope)
            accuracy = _accuracy(a2_clean, dataset.labels)
        else:
            accuracy = _accuracy(a2, dataset.labels)
        history.append((epoch, loss, accuracy))
        epochs_run = epoch

        if snapshot_from_start or polish_left is not None \
                or (accuracy >= cfg.target_accuracy and cfg.polish_epochs):
            # Rank equally accurate epochs by what the weight grid and
            # device noise consume: the net-input margin, or under
            # noise-aware training the frozen-ensemble survival.
            if noisy:
                snap = ensemble_snap(f1, f2, accuracy)
            else:
                snap = (accuracy, _margin(z2, dataset.labels))
            if best_snap is None or snap > best_snap[:len(snap)]:
                best_snap = (*snap, f1.copy(), f2.copy())
        if accuracy >= cfg.target_accuracy:
            converged = True
            if cfg.polish_epochs == 0:
                break
            if polish_left is None:
                polish_left = cfg.polish_epochs
        if polish_left is not None:
            if polish_left == 0:
                break
            polish_left -= 1
        if epoch == cfg.epochs:
            break

        # Progress means a meaningful loss drop or a new accuracy high;
        # sub-0.1% loss creep on a plateau does not reset the clock.
        if loss < best_loss * (1.0 - 1e-3) or accuracy > best_acc:
            stalled = 0
        else:
            stalled += 1
        best_loss = min(best_loss, loss)
        best_acc = max(best_acc, accuracy)
        if cfg.kick_patience and stalled >= cfg.kick_patience \
                and polish_left is None and accuracy < cfg.target_accuracy:
            w1 = _clip_layer1(
                w1 + rng.uniform(-cfg.kick_scale, cfg.kick_scale, w1.shape)
                / np.sqrt(dataset.n_features))
            w2 = np.clip(
                w2 + rng.uniform(-cfg.kick_scale, cfg.kick_scale, w2.shape)
                / np.sqrt(n_hidden),
                -cfg.weight_clip, cfg.weight_clip)
            v1 = np.zeros_like(v1)
            v2 = np.zeros_like(v2)
            lr = cfg.learning_rate
            best_loss = np.inf
            best_acc = -1.0
            stalled = 0
            continue

        if window is not None and cfg.revive_rate > 0.0:
            _revive_dead_rows(w1, z1, window, cfg.revive_rate)
            _revive_dead_rows(w2, z2, window, cfg.revive_rate)

        err = err_weight * (a2 - targets)
        delta2 = err * activation_derivative(z2, kind, cfg.surrogate_slope)
        if cfg.margin_target > 0.0:
            # Push each sample's own net input up and its runner-up's
            # down until the gap reaches margin_target. Applied past
            # the activation derivative so a saturated runner-up keeps
            # moving away instead of parking just over the rail.
            shortfall, runner = margin_residual(z2)
            delta2[idx, labels] -= cfg.margin_weight * shortfall
            delta2[idx, runner] += cfg.margin_weight * shortfall
        grad2 = a1_aug.T @ delta2 / n
        delta1 = (delta2 @ n2[:-1].T) \
            * activation_derivative(z1, kind, cfg.surrogate_slope)
        if cfg.rail_weight > 0.0 and window is not None \
                and accuracy >= cfg.target_accuracy:
            # Clear the window toward the nearest rail; force grows
            # with depth into the guarded band and is applied past the
            # derivative gate so it can cross the flat regions.
            lo_edge = window[0] - cfg.rail_margin
            hi_edge = window[1] + cfg.rail_margin
            d_lo = z1 - lo_edge
            d_hi = hi_edge - z1
            inside = (d_lo > 0.0) & (d_hi > 0.0)
            rail = np.where(d_lo <= d_hi, d_lo, -d_hi)
            delta1 = delta1 + cfg.rail_weight * np.where(inside, rail, 0.0)
        grad1 = x.T @ delta1 / n

        v1_next = cfg.momentum * v1 - lr * grad1
        v2_next = cfg.momentum * v2 - lr * grad2
        w1_next = _clip_layer1(w1 + v1_next)
        w2_next = np.clip(w2 + v2_next, -cfg.weight_clip, cfg.weight_clip)

        if cfg.adaptive_lr:
            c1, c2 = fwd_weights(w1_next, w2_next)
            if noisy:
                # Same jitter as this epoch's forward, so the
                # comparison isolates the effect of the step.
                c1, c2 = jitter(c1, e1), jitter(c2, e2)
            z2_next = _augment(
                activation(x @ c1, kind, cfg.surrogate_slope)) @ c2
            a2_next = activation(z2_next, kind, cfg.surrogate_slope)
            next_loss = batch_loss(z2_next, a2_next)
            if next_loss > loss * cfg.loss_spike:
                # Overshoot: discard the step, cool down, clear momentum.
                lr *= cfg.lr_down
                v1 = np.zeros_like(v1)
                v2 = np.zeros_like(v2)
                continue
            if next_loss < loss:
                lr *= cfg.lr_up
        v1, v2, w1, w2 = v1_next, v2_next, w1_next, w2_next

    if best_snap is not None:
        accuracy = best_snap[0]
        w1, w2 = best_snap[-2], best_snap[-1]
    elif levels is not None:
        w1, w2 = f1, f2

    return TrainResult(
        w1=_raw_form(w1), w2=w2, kind=kind, config=cfg, accuracy=accuracy,
        converged=converged, epochs_run=epochs_run,
        history=np.array(history).reshape(-1, 3),
    )


def train(dataset: Dataset, n_hidden: int, kind: TransferKind,
          cfg: TrainConfig | None = None) -> TrainResult:
    """Full-batch gradient descent with momentum; deterministic per seed.

    Stops early once training accuracy reaches cfg.target_accuracy,
    plus the configured margin-polish window. Non-convergence is
    reported through the converged flag, not raised.
    """
    cfg = cfg or TrainConfig()
    if n_hidden < 1:
        raise DomainError("need at least one hidden neuron")
    rng = np.random.default_rng(cfg.seed)
    # Fan-in scaling keeps the pre-activation spread comparable across
    # layer widths, so one config transfers between hidden sizes.
    w1 = rng.uniform(cfg.init_low, cfg.init_high,
                     (dataset.n_features + 1, n_hidden)) \
        / np.sqrt(dataset.n_features)
    w2 = rng.uniform(cfg.init_low, cfg.init_high,
                     (n_hidden + 1, dataset.n_classes)) / np.sqrt(n_hidden)
    window = _active_window(kind, cfg.surrogate_slope)
    if window is not None:
        # Bounded-gradient transfers only carry gradient inside their
        # window; start every threshold row inside it so no neuron is
        # born with a dead derivative.
        z_lo, z_hi = window
        mid, quarter = 0.5 * (z_lo + z_hi), 0.25 * (z_hi - z_lo)
        w1[-1, :] = rng.uniform(mid - quarter, mid + quarter, n_hidden)
        w2[-1, :] = rng.uniform(mid - quarter, mid + quarter,
                                dataset.n_classes)
    offset = dataset.features.mean(axis=0) if cfg.center_inputs else None
    return _fit(dataset, kind, cfg, rng, w1, w2,
                levels=None, snapshot_from_start=False, offset=offset)


def finalize(result: TrainResult, dataset: Dataset,
             levels: int | None = 32,
             cfg: TrainConfig | None = None) -> TrainResult:
    """Fine-tune a trained network, by default quantization-aware.

    With `levels` set, re-runs the fitting loop from the trained
    weights with every forward pass quantized to the crossbar's
    magnitude grid, so the returned weights lie exactly on that grid
    and the reported accuracy is the accuracy of exactly the weights a
    crossbar can hold. With levels=None it refines in plain float,
    which is useful as a hardening stage under a different config (for
    example with training noise enabled). Snapshot selection starts at
    the incoming weights, so the result never ranks below them. The
    input result is untouched.
    """
    if levels is not None and levels < 2:
        raise ConfigError("need at least 2 levels")
    cfg = cfg or result.config
    rng = np.random.default_rng([cfg.seed, 0 if levels is None else levels])
    offset = dataset.features.mean(axis=0) if cfg.center_inputs else None
    return _fit(dataset, result.kind, cfg, rng,
                result.w1.copy(), result.w2.copy(),
                levels=levels, snapshot_from_start=True, offset=offset)


@dataclass(frozen=True)
class QuantizationReport:
    levels: int
    pruned: int
    max_error: float
    rms_error: float


def quantize_weights(weights, levels: int = 32):
    """Snap weights onto the crossbar's representable magnitudes.

    Uses the conductance quantizer in weight space: the largest weight
    magnitude maps to the top level, sub-minimum magnitudes prune to
    zero, signs are untouched. Returns (quantized, report).
    """
    w = np.asarray(weights, dtype=float)
    w_max = float(np.max(np.abs(w)))
    if w_max == 0.0:
        raise DomainError("all-zero weights cannot be quantized")
    crange = ConductanceRange(levels=levels)
    scale = crange.g_max / w_max
    mag = crange.quantize(np.abs(w) * scale) / scale
    quantized = np.sign(w) * mag
    err = np.abs(quantized - w)
    report = QuantizationReport(
        levels=levels,
        pruned=int(np.sum((w != 0.0) & (quantized == 0.0))),
        max_error=float(err.max()),
        rms_error=float(np.sqrt(np.mean(err ** 2))),
    )
    return quantized, report


def quantize_result(result: TrainResult, levels: int = 32) -> TrainResult:
    """Trained network with both layers quantized to the level grid."""
    q1, _ = quantize_weights(result.w1, levels)
    q2, _ = quantize_weights(result.w2, levels)
    return TrainResult(
        w1=q1, w2=q2, kind=result.kind, config=result.config,
        accuracy=result.accuracy, converged=result.converged,
        epochs_run=result.epochs_run, history=result.history,
    )


@dataclass(frozen=True)
class SearchResult:
    n_hidden: int
    result: TrainResult
    attempts: int  # total training runs spent


def min_hidden_search(
    dataset: Dataset,
    kind: TransferKind,
    cfg: TrainConfig | None = None,
    max_hidden: int = 48,
    restarts: int = 5,
) -> SearchResult:
    """Smallest hidden-layer size reaching the target training accuracy.

    Scans sizes upward; each size gets `restarts` independent runs with
    seeds derived deterministically from (cfg.seed, size, restart), and
    the first run meeting the target wins.
    """
    cfg = cfg or TrainConfig()
    if restarts < 1:
        raise ConfigError("restarts must be >= 1")
    attempts = 0
    for n_hidden in range(1, max_hidden + 1):
        for restart in range(restarts):
            seed = int(np.random.SeedSequence(
                [cfg.seed, n_hidden, restart]).generate_state(1)[0])
            run = train(dataset, n_hidden, kind, replace(cfg, seed=seed))
            attempts += 1
            if run.converged:
                return SearchResult(n_hidden=n_hidden, result=run,
                                    attempts=attempts)
    raise SearchError(
        f"no hidden size up to {max_hidden} reached "
        f"accuracy {cfg.target_accuracy}")


# -- weights file ------------------------------------------------------


def save_weights(path, result: TrainResult, extra: dict | None = None) -> None:
    """Write the trained network as a versioned JSON weights document."""
    doc = {
        "schema": WEIGHTS_SCHEMA,
        "transfer": result.kind.to_dict(),
        "layers": [
            {"n_inputs": result.n_features, "n_neurons": result.n_hidden,
             "weights": result.w1.tolist()},
            {"n_inputs": result.n_hidden, "n_neurons": result.n_classes,
             "weights": result.w2.tolist()},
        ],
        "accuracy": result.accuracy,
        "converged": result.converged,
        "epochs_run": result.epochs_run,
        "config": dataclasses.asdict(result.config),
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc) + "\n")


def load_weights(path) -> TrainResult:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != WEIGHTS_SCHEMA:
        raise ConfigError(
            f"expected schema {WEIGHTS_SCHEMA}, got {doc.get('schema')!r}")
    cfg = TrainConfig(**doc["config"])
    return TrainResult(
        w1=np.array(doc["layers"][0]["weights"]),
        w2=np.array(doc["layers"][1]["weights"]),
        kind=TransferKind.from_dict(doc["transfer"]),
        config=cfg,
        accuracy=doc["accuracy"],
        converged=doc["converged"],
        epochs_run=doc["epochs_run"],
        history=np.zeros((0, 3)),
    )
