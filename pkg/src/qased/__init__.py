"""Hybrid quantum/classical two-stage stochastic economic dispatch.

Modules: ``qsim`` (statevector simulator), ``uqae`` (prediction-error
scenarios by amplitude estimation), ``dispatch`` and ``caseio`` (the
two-stage model and its case files), ``lp`` (simplex and subproblem duals),
``qubo`` / ``qaoa`` (master and cut-selection encodings and solvers),
``cutsel``, ``benders`` and ``cli``.
"""

__version__ = "0.1.0"
