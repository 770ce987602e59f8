"""Event-driven two-sided limit order book model, price-switching controls
with internalization and dark-pool hidden orders, and a parallel
backward-induction solver for the optimal trading policy.

Subpackages follow the problem structure: ``market_model`` (book dynamics),
``strategy_accounting`` (controls and transaction accounting), ``reward``
(terminal criteria), ``dp_solver`` (grid + backward induction), ``evaluator``
(forward simulation, oracle checks, premium analysis), ``cli`` (entry point).
"""

import os

# Must be set before numba is first imported anywhere in the process so that
# worker counts above the physical core count remain selectable; the OpenMP
# layer avoids a version probe warning from the TBB one.
os.environ.setdefault("NUMBA_NUM_THREADS", "16")
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

__version__ = "0.1.0"

from . import market_model, strategy_accounting, reward  # noqa: E402,F401
