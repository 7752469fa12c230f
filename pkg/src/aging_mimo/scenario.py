"""Multi-user scenario: users, pilot length and numerical settings.

User 0 is the tagged user whose frame plan and powers are optimized.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from typing import Sequence

from .detequiv import DEFAULT_CONFIG, DetEquivConfig
from .estimation import SlotStats, UserSlot, user_estimate_stats
from .frame import FramePlan, PowerBudget, UserConfig, split_powers


@dataclass(frozen=True)
class Scenario:
    users: tuple[UserConfig, ...]
    pilot_len: int
    detequiv: DetEquivConfig = DEFAULT_CONFIG
    name: str = ""
    _cache: dict = field(default_factory=dict, compare=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if not self.users:
            raise ValueError("a scenario needs at least one user")
        need = len(self.users) * max(u.n_tx for u in self.users)
        if self.pilot_len < need:
            raise ValueError(f"pilot length {self.pilot_len} < K * n_tx = {need}")
        n_rx = {u.stats.n_rx for u in self.users}
        if len(n_rx) != 1:
            raise ValueError("all users must see the same number of receive antennas")

    @property
    def n_rx(self) -> int:
        return self.users[0].stats.n_rx

    @property
    def tagged(self) -> UserConfig:
        return self.users[0]

    @property
    def noise_var(self) -> float:
        return self.tagged.data_noise_var

    def plan(self, sizes: Sequence[int]) -> FramePlan:
        return FramePlan(tuple(sizes), self.pilot_len)

    def with_tagged_budget(self, pilot_max: float, data_max: float) -> "Scenario":
        b = self.tagged.budget
        tagged = replace(self.tagged, budget=PowerBudget(pilot_max, data_max, b.total))
        return replace(self, users=(tagged,) + self.users[1:], _cache={})

    def _user_slot(self, k, plan, t, p_pilot, p_data) -> UserSlot:
        key = (k, plan.sizes, plan.pilot_len, t, p_pilot)
        est = self._cache.get(key)
        if est is None:
            est = user_estimate_stats(self.users[k], plan, t, p_pilot)
            with self._lock:
                self._cache[key] = est
        u = self.users[k]
        return UserSlot(u.gain, est.cov_est, est.cov_err, est.cov_true, p_data, u.n_tx, rule=u.beamformer)

    def slot(self, plan: FramePlan, t, tagged_budget: tuple[float, float] | None = None) -> SlotStats:
        """Statistics of all users at data slot ``t`` without beamformers.

        ``tagged_budget`` replaces the tagged user's ``(pilot_max, data_max)``.
        """
        users = []
        for k, u in enumerate(self.users):
            budget = u.budget
            if k == 0 and tagged_budget is not None:
                budget = PowerBudget(tagged_budget[0], tagged_budget[1])
            p_p, p_d = split_powers(budget, plan)
            users.append(self._user_slot(k, plan, t, p_p, p_d))
        return SlotStats(tuple(users), self.noise_var)
