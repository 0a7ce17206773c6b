from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ProbabilityEstimate:
    """Bernoulli frequency with its binomial standard error."""
    p: float
    trials: int
    hits: int
    stderr: float
    # between-sample standard error when trials are grouped per sample
    stderr_samples: float | None = None
    extra: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_counts(cls, hits: int, trials: int, per_sample=None, **extra):
        p = hits / trials
        se = float(np.sqrt(p * (1 - p) / trials))
        se_s = None
        if per_sample is not None and len(per_sample) > 1:
            ps = np.asarray(per_sample, dtype=np.float64)
            se_s = float(ps.std(ddof=1) / np.sqrt(ps.size))
        return cls(p, trials, hits, se, se_s, extra)

    @property
    def conservative_stderr(self) -> float:
        return max(self.stderr, self.stderr_samples or 0.0)

    def to_dict(self) -> dict:
        d = {"p": self.p, "trials": self.trials, "hits": self.hits, "stderr": self.stderr}
        if self.stderr_samples is not None:
            d["stderr_samples"] = self.stderr_samples
        d.update(self.extra)
        return d
