"""Parameters, unit conventions and adiabatic schedules.

Units: hbar = 1. The default normalized system is b = -1, c = +1, where the
classical soliton width is W0 = 2/N.
"""
from dataclasses import dataclass, field, replace
import math


class NoBoundStateError(ValueError):
    """Raised when b*c >= 0, where no soliton exists."""


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class SolitonParams:
    b: float = -1.0
    c: float = 1.0
    B: float = 1.0
    n: int = 1
    m: int = 1

    def __post_init__(self):
        if self.n < 0 or self.m < 0:
            raise ValueError("photon numbers must be non-negative")
        if self.n + self.m < 1:
            raise ValueError("need at least one photon (n + m >= 1)")
        if self.B < 0:
            raise ValueError("cross-phase ratio B must be >= 0")

    @property
    def N(self) -> int:
        return self.n + self.m

    @property
    def bound(self) -> bool:
        return self.b * self.c < 0

    @property
    def eigenstate_valid(self) -> bool:
        return eigenstate_valid(self.B)

    def require_bound(self):
        if self.c == 0:
            raise NoBoundStateError("c = 0: no width scale")
        if not self.bound:
            raise NoBoundStateError(f"no bound state for b*c = {self.b * self.c:g} >= 0")

    def with_c(self, c):
        return replace(self, c=c)


def eigenstate_valid(B) -> bool:
    # The pairwise-exponential ansatz is an eigenstate only for these two values.
    return B == 0 or B == 1


@dataclass(frozen=True)
class DerivedScales:
    W0: float
    T_sol: float
    shot_noise_dp: float


def shot_noise_dp(params: SolitonParams, q: float = 2.0) -> float:
    """Average-momentum spread that zeroes <z_i z_j> at t = 0."""
    return abs(math.sqrt(params.N) * params.c / (math.sqrt(8.0 * q) * params.b))


def derive_scales(params: SolitonParams, q: float = 2.0) -> DerivedScales:
    params.require_bound()
    W0 = abs(2.0 * params.b / (params.N * params.c))
    T_sol = math.pi * W0 ** 2 / (2.0 * abs(params.b))
    return DerivedScales(W0=W0, T_sol=T_sol, shot_noise_dp=shot_noise_dp(params, q))


@dataclass(frozen=True)
class Segment:
    duration: float
    c_start: float
    c_end: float


@dataclass(frozen=True)
class AdiabaticSchedule:
    """Piecewise-linear ramp of c; b is held fixed."""

    segments: tuple = field(default_factory=tuple)

    def __post_init__(self):
        segs = tuple(s if isinstance(s, Segment) else Segment(*s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        sign = None
        for s in segs:
            if s.duration < 0:
                raise ScheduleError("segment durations must be >= 0")
            for cv in (s.c_start, s.c_end):
                if cv == 0:
                    raise ScheduleError("schedule reaches c = 0")
                sg = cv > 0
                if sign is None:
                    sign = sg
                elif sg != sign:
                    raise ScheduleError("schedule changes the sign of c")

    @classmethod
    def linear(cls, c_start, c_end, duration):
        return cls(((duration, c_start, c_end),))

    @property
    def duration(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def c_initial(self) -> float:
        return self.segments[0].c_start

    @property
    def c_final(self) -> float:
        return self.segments[-1].c_end

    @property
    def gamma(self) -> float:
        return abs(self.c_initial / self.c_final)

    def c_at(self, t: float) -> float:
        """c(t), linear within a segment, held at the end value past the end."""
        if not self.segments:
            raise ScheduleError("empty schedule")
        t0 = 0.0
        for s in self.segments:
            if t <= t0 + s.duration:
                if s.duration == 0:
                    return s.c_end
                frac = max(0.0, (t - t0) / s.duration)
                return s.c_start + frac * (s.c_end - s.c_start)
            t0 += s.duration
        return self.segments[-1].c_end


def adiabaticity_margin(schedule: AdiabaticSchedule, params: SolitonParams) -> float:
    """T * |E(end) - E(start)| at p = 0; large values mean the ramp is slow."""
    from .bethe import energy

    if not schedule.segments:
        raise ScheduleError("empty schedule")
    E0 = energy(params.with_c(schedule.c_initial), 0.0)
    E1 = energy(params.with_c(schedule.c_final), 0.0)
    return schedule.duration * abs(E1 - E0)
