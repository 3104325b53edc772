"""Helpers shared by the experiment scripts."""

import os
from pathlib import Path

from qased import uqae
from qased.config import OUTPUT_ENV


def out_dir(default: str) -> Path:
    p = Path(os.environ.get(OUTPUT_ENV) or default)
    p.mkdir(parents=True, exist_ok=True)
    return p


def scenarios(case, mode="exact", shots=512, seed=0):
    return uqae.generate_scenarios([r.error for r in case.res_units], [r.encoding for r in case.res_units],
                                   mode=mode, shots=shots, seed=seed)
