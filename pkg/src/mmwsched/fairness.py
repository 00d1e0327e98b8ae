"""Proportional-fairness bookkeeping.

Cumulative rates follow an exponential moving average
R_i <- (1 - eta_i) R_i + eta_i r_i, initialized at R_i = 1, and the
scheduler weights are their reciprocals, so long-starved users float to
the top of every weighted-rate objective.
"""

import csv

import numpy as np


class RateTracker:
    """EMA rate state for all users."""

    def __init__(self, n_users: int, ema_factor=0.1, track_history: bool = False):
        self.cumulative = np.ones(n_users)
        eta = np.broadcast_to(np.asarray(ema_factor, dtype=float), (n_users,)).copy()
        if np.any(eta < 0.0) or np.any(eta > 1.0):
            raise ValueError("ema_factor must lie in [0, 1]")
        self.eta = eta
        self.slot_count = 0
        self._history = [] if track_history else None

    @property
    def n_users(self) -> int:
        return self.cumulative.shape[0]

    def update(self, rates) -> None:
        rates = np.asarray(rates, dtype=float)
        if rates.shape != self.cumulative.shape:
            raise ValueError(f"expected {self.cumulative.shape} rates, got {rates.shape}")
        if np.any(rates < 0.0):
            raise ValueError("rates must be non-negative")
        self.cumulative = (1.0 - self.eta) * self.cumulative + self.eta * rates
        self.slot_count += 1
        if self._history is not None:
            self._history.append(self.cumulative.copy())

    def weights(self) -> np.ndarray:
        if np.any(self.cumulative <= 0.0):
            raise RuntimeError("cumulative rates must stay positive")
        return 1.0 / self.cumulative

    def pf_metric(self) -> float:
        """Sum of natural logs of the cumulative rates."""
        if np.any(self.cumulative <= 0.0):
            raise RuntimeError("cumulative rates must stay positive")
        return float(np.sum(np.log(self.cumulative)))

    @property
    def history(self):
        if self._history is None:
            raise RuntimeError("tracker was created without track_history")
        return self._history

    def write_csv(self, path) -> None:
        """One row per (slot, user) with the cumulative rate at that slot."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slot", "user", "cumulative_rate"])
            for slot, row in enumerate(self.history, start=1):
                for user, value in enumerate(row):
                    writer.writerow([slot, user, repr(float(value))])
