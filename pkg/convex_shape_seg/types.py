from dataclasses import asdict, dataclass, field
from typing import Dict, List, Literal, Optional, Tuple

StopReason = Literal["tolerance", "max-iterations"]


def radius_key(r: float) -> str:
    return f"r{r:g}"


@dataclass
class IterationRecord:
    """
    One solver iteration. `t` counts completed iterations; the band,
    violations and energy describe the iterate the update started from.
    """

    t: int
    band_size: int
    min_violation: Dict[float, float]
    energy: float
    rv: Optional[float] = None


@dataclass
class RunReport:
    iterations: int
    stop_reason: StopReason
    final_rv: Optional[float]
    min_violation: Dict[float, float]
    convexity_score: float
    seconds: float
    rv_history: List[Tuple[int, float]] = field(default_factory=list)
    radii: List[float] = field(default_factory=list)
    final_energy: float = 0.0
    band_size: int = 0
    object_pixels: int = 0
    # pixels the final raster hull rounding added
    rounded_pixels: int = 0

    def to_dict(self) -> dict:
        report = asdict(self)
        report["min_violation"] = {radius_key(r): v for r, v in self.min_violation.items()}
        report["rv_history"] = [{"t": t, "rv": rv} for t, rv in self.rv_history]
        return report
