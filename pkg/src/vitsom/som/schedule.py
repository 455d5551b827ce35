import logging
from dataclasses import dataclass

from ..errors import ConfigurationError, ContractError

logger = logging.getLogger(__name__)

DEFAULT_T_MIN = 0.001


@dataclass(frozen=True)
class TemperatureSchedule:
    """近傍関数の温度を t_max から t_min まで total_steps かけて指数的に下げるスケジュール"""

    t_max: float
    t_min: float
    total_steps: int

    def __post_init__(self) -> None:
        if not self.t_min > 0:
            raise ConfigurationError(f"t_min must be positive, got {self.t_min}", key="t_min")
        if self.t_max < self.t_min:
            raise ConfigurationError(
                f"t_max ({self.t_max}) must be >= t_min ({self.t_min})", key="t_max"
            )
        if self.total_steps < 1:
            raise ConfigurationError(f"total_steps must be >= 1, got {self.total_steps}",
                                     key="total_steps")

    @classmethod
    def for_grid(cls, height: int, width: int, total_steps: int,
                 t_min: float = DEFAULT_T_MIN) -> "TemperatureSchedule":
        """格子の一辺の半分を t_max とするスケジュールを作る"""
        return cls(t_max=max(height, width) / 2.0, t_min=t_min, total_steps=total_steps)

    def __call__(self, k: int) -> float:
        return temperature(k, self)


def temperature(k: int, schedule: TemperatureSchedule) -> float:
    """反復kでの温度 T(k) = t_max * (t_min / t_max) ** (k / K)

    k = 0 では t_max、k >= K では t_min をそのまま返します。

    Raises:
        ContractError: kが負の場合
    """
    if k < 0:
        raise ContractError(f"iteration must be >= 0, got {k}")
    if k == 0:
        return schedule.t_max
    if k >= schedule.total_steps:
        return schedule.t_min
    ratio = schedule.t_min / schedule.t_max
    return schedule.t_max * ratio ** (k / schedule.total_steps)
