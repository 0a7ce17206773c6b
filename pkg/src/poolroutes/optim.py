"""SGD with Nesterov momentum, coupled L2 and per-group step-decay schedules.

A schedule multiplies the learning rate by ``q`` every ``period`` epochs,
starting at ``phase``; ``q`` and ``period`` may change across epoch ranges.
Convolutional (CL) and fully connected (FC) parameters each get their own
schedule, which is how the out-of-phase decay of the A-VGG8/16 recipes is
expressed (FC decays at 10, 30, 50, ..., CL at 20, 40, 60, ...).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BATCH_SIZE = 100


@dataclass(frozen=True)
class Piece:
    """Decay rule ``(q, period)`` active while ``epoch < until`` (or ``<=``)."""
    q: float
    period: int
    until: int | None = None
    inclusive: bool = False

    def __post_init__(self):
        if not 0 < self.q <= 1:
            raise ValueError(f"decay factor must lie in (0, 1], got {self.q}")
        if self.period < 1:
            raise ValueError(f"decay period must be >= 1, got {self.period}")

    def admits(self, epoch: int) -> bool:
        if self.until is None:
            return True
        return epoch <= self.until if self.inclusive else epoch < self.until


@dataclass(frozen=True)
class DecaySchedule:
    base_rate: float
    pieces: tuple[Piece, ...] = ()
    phase: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        if self.pieces and self.pieces[-1].until is not None:
            raise ValueError("the last piece must be unbounded so every epoch is covered")

    @property
    def start(self) -> int | None:
        if not self.pieces:
            return None
        return self.phase if self.phase is not None else self.pieces[0].period

    def piece_at(self, epoch: int) -> Piece:
        for p in self.pieces:
            if p.admits(epoch):
                return p
        raise AssertionError("unreachable: last piece is unbounded")

    def events(self, up_to: int) -> list[int]:
        """Epochs at which a decay is applied, up to and including ``up_to``."""
        out = []
        e = self.start
        while e is not None and e <= up_to:
            out.append(e)
            e += self.piece_at(e).period
        return out


def lr_at_epoch(schedule: DecaySchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    rate = schedule.base_rate
    for e in schedule.events(epoch):
        rate *= schedule.piece_at(e).q
    return rate


@dataclass(frozen=True)
class GroupHyper:
    lr: float
    momentum: float
    l2: float
    schedule: DecaySchedule

    def __post_init__(self):
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.l2 < 0:
            raise ValueError("L2 coefficient must be nonnegative")


@dataclass(frozen=True)
class HyperSet:
    name: str
    groups: dict
    epochs: int
    batch_size: int = BATCH_SIZE

    @property
    def single_group(self) -> bool:
        return self.groups["CL"] is self.groups["FC"]

    def to_dict(self) -> dict:
        def g(h: GroupHyper):
            return {
                "lr": h.lr, "momentum": h.momentum, "l2": h.l2,
                "decay_start": h.schedule.start,
                "pieces": [{"q": p.q, "period": p.period, "until": p.until,
                            "inclusive": p.inclusive} for p in h.schedule.pieces],
            }
        groups = {"ALL": g(self.groups["CL"])} if self.single_group else \
            {k: g(v) for k, v in self.groups.items()}
        return {"name": self.name, "epochs": self.epochs, "batch_size": self.batch_size,
                "groups": groups}


def _group(lr, momentum, l2, pieces, phase=None) -> GroupHyper:
    return GroupHyper(lr, momentum, l2, DecaySchedule(lr, tuple(pieces), phase))


def _pieces(q1, q2, period, until, inclusive=False):
    return (Piece(q1, period, until, inclusive), Piece(q2, period))


def _lenet(lr, momentum, l2, epochs, name):
    h = _group(lr, momentum, l2, _pieces(0.8, 0.7, 10, 120))
    return HyperSet(name, {"CL": h, "FC": h}, epochs)


_LINEAR_CL = ((0.0078, 0.98, 1.15e-3), (Piece(0.65, 20),))
_LINEAR_FC = ((0.00297, 0.985, 1.15e-3), _pieces(0.55, 0.5, 20, 120))

_TABLE = {
    "A-VGG16": lambda: HyperSet("A-VGG16", {
        "CL": _group(0.00721, 0.98, 1.15e-3, _pieces(0.65, 0.55, 20, 140, inclusive=True), 20),
        "FC": _group(0.0045, 0.982, 1.35e-3, _pieces(0.65, 0.5, 20, 150), 10),
    }, 280),
    "A-VGG14": lambda: HyperSet("A-VGG14", {
        "CL": _group(0.0078, 0.985, 1.15e-3, (Piece(0.65, 20),)),
        "FC": _group(6.05e-4, 0.98, 1.15e-3, _pieces(0.55, 0.5, 10, 120)),
    }, 200),
    "A-VGG13": lambda: HyperSet("A-VGG13", {
        "CL": _group(0.0078, 0.98, 1.15e-3, (Piece(0.65, 20),)),
        "FC": _group(0.00297, 0.985, 1.15e-3, _pieces(0.55, 0.5, 20, 120)),
    }, 200),
    "A-VGG8": lambda: HyperSet("A-VGG8", {
        "CL": _group(0.0145, 0.97, 1e-3, _pieces(0.66, 0.55, 20, 140, inclusive=True), 20),
        "FC": _group(0.002, 0.975, 1.2e-3, _pieces(0.66, 0.5, 20, 150), 10),
    }, 200),
    "A-VGG6": lambda: HyperSet("A-VGG6", {
        "CL": _group(9.75e-3, 0.972, 1.1e-3, _pieces(0.65, 0.55, 20, 120)),
        "FC": _group(1.95e-3, 0.98, 1.1e-3, _pieces(0.65, 0.5, 20, 120)),
    }, 200),
    "A-VGG16-linear": lambda: HyperSet("A-VGG16-linear", {
        "CL": _group(*_LINEAR_CL[0], _LINEAR_CL[1]),
        "FC": _group(*_LINEAR_FC[0], _LINEAR_FC[1]),
    }, 200),
    "A-VGG13-linear": lambda: HyperSet("A-VGG13-linear", {
        "CL": _group(*_LINEAR_CL[0], _LINEAR_CL[1]),
        "FC": _group(*_LINEAR_FC[0], _LINEAR_FC[1]),
    }, 200),
    "A-LeNet5-a": lambda: _lenet(0.032, 0.92, 5e-4, 240, "A-LeNet5-a"),
    "A-LeNet5-b": lambda: _lenet(0.03, 0.93, 4e-4, 280, "A-LeNet5-b"),
    "A-LeNet5-c": lambda: _lenet(0.028, 0.925, 5e-4, 280, "A-LeNet5-c"),
    "A-LeNet5-d": lambda: _lenet(0.032, 0.92, 5e-4, 240, "A-LeNet5-d"),
    "A-LeNet5-e": lambda: _lenet(0.02, 0.922, 1.2e-3, 240, "A-LeNet5-e"),
}

HYPER_NAMES = tuple(_TABLE)


def canonical_name(name: str) -> str:
    for key in _TABLE:
        if key.lower() == name.lower():
            return key
    raise KeyError(f"no hyperparameter table for {name!r}; known: {', '.join(_TABLE)}")


def hyper_table(name: str) -> HyperSet:
    """Published hyperparameters for the named architecture (batch size 100)."""
    return _TABLE[canonical_name(name)]()


@dataclass
class SGD:
    """Nesterov SGD over a network's parameter groups.

    ``variant="lookahead"``: v <- mu*v - lr*g';  theta <- theta + mu*v - lr*g'
    ``variant="buffer"``:    b <- mu*b + g';     theta <- theta - lr*(g' + mu*b)
    with g' = g + l2*theta.  The two agree while the learning rate is constant.
    """
    hypers: dict
    variant: str = "lookahead"
    l2_exclude: tuple = ()
    velocity: dict = field(default_factory=dict)
    steps: int = 0
    epoch: int = 0

    def __post_init__(self):
        if self.variant not in ("lookahead", "buffer"):
            raise ValueError(f"unknown Nesterov variant {self.variant!r}")

    def rates(self, epoch: int | None = None) -> dict[str, float]:
        e = self.epoch if epoch is None else epoch
        return {g: lr_at_epoch(h.schedule, e) for g, h in self.hypers.items()}

    def step(self, params, grads, epoch: int | None = None):
        """Update ``params`` in place.

        ``params`` and ``grads`` are iterables of ``(group, key, array)``
        (as produced by ``Network.parameters()`` / ``Network.grads()``).
        """
        if epoch is not None:
            self.epoch = epoch
        grads = {key: g for _, key, g in grads}
        rates = self.rates()
        for group, key, theta in params:
            g = grads[key]
            if g.shape != theta.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {theta.shape} "
                                 f"for {key}")
            h = self.hypers[group]
            lr = theta.dtype.type(rates[group])
            mu = theta.dtype.type(h.momentum)
            l2 = 0.0 if any(key.endswith(s) for s in self.l2_exclude) else h.l2
            g_eff = g + theta.dtype.type(l2) * theta if l2 else g
            v = self.velocity.get(key)
            if v is None:
                v = self.velocity[key] = np.zeros_like(theta)
            if self.variant == "lookahead":
                v *= mu
                v -= lr * g_eff
                theta += mu * v - lr * g_eff
            else:
                v *= mu
                v += g_eff
                theta -= lr * (g_eff + mu * v)
        self.steps += 1


def sgd_step(net, state: SGD, epoch: int | None = None):
    state.step(net.parameters(), net.grads(), epoch)
    return state
