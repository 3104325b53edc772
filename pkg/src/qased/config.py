"""Run configuration shared by the command-line drivers and the experiment scripts."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .benders import MASTERS, SELECTIONS, TERMINATIONS, BendersConfig
from .caseio import BUNDLED
from .qaoa import AnnealSchedule, QaoaConfig

OUTPUT_ENV = "QASED_OUTPUT_DIR"


@dataclass(frozen=True)
class RunConfig:
    case: str = "micro6"
    mode: str = "exact"  # exact | sampled scenario weights
    shots: int = 512
    seed: int = 0
    master: str = "qubo-exact"
    selection: str = "greedy"
    eps: float = 1e-6
    max_iter: int = 50
    termination: str = "gap"
    workers: int = 1
    qaoa: QaoaConfig = field(default_factory=lambda: QaoaConfig(cap=16))
    anneal: AnnealSchedule = field(default_factory=AnnealSchedule)
    output_dir: str = "out"

    def __post_init__(self):
        if self.case not in BUNDLED and not Path(self.case).is_file():
            raise ValueError(f"case {self.case!r} is neither a file nor a bundled case {BUNDLED}")
        if self.mode not in ("exact", "sampled"):
            raise ValueError("mode must be 'exact' or 'sampled'")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ValueError("seed must be an explicit integer")
        if self.master not in MASTERS or self.selection not in SELECTIONS or self.termination not in TERMINATIONS:
            raise ValueError("unknown backend or termination rule")

    def benders(self, seed: int | None = None) -> BendersConfig:
        return BendersConfig(master=self.master, selection=self.selection, eps=self.eps, max_iter=self.max_iter,
                             termination=self.termination, workers=self.workers, qaoa=self.qaoa,
                             anneal=self.anneal, seed=self.seed if seed is None else seed)

    def resolved_output_dir(self) -> Path:
        """The environment variable, when set, overrides the configured directory."""
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)
