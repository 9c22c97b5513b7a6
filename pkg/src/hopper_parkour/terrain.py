"""Piecewise-flat obstacle course model.

The course is a flat ground line at z = 0 with axis-aligned rectangular
blocks sitting on it.  A block spans [front, back] horizontally and has a
flat top at its height.  Restricted areas are ground spans that must not be
landed on (at any height, should they overlap a block).  All geometry is
one-dimensional in x; z is derived.

Invariants enforced by :func:`validate_parkour`:
  * blocks have positive width and height, lie inside the course extent,
    and are pairwise disjoint (strictly separated),
  * restricted areas have positive width and lie inside the extent,
  * both safety margins are strictly positive.
"""

from __future__ import annotations

from dataclasses import dataclass, replace


class CourseError(ValueError):
    """Invalid course geometry or query."""


class OutOfExtent(CourseError):
    """Queried position lies outside the course extent."""


class UnknownId(CourseError):
    """Update referenced an obstacle or area that does not exist."""


@dataclass(frozen=True)
class Obstacle:
    """Rectangular block on flat ground: [front, back] x [0, height]."""

    front: float
    back: float
    height: float
    uid: str | None = None

    @property
    def width(self) -> float:
        return self.back - self.front


@dataclass(frozen=True)
class RestrictedArea:
    """Ground span [start, end] that may not be landed on."""

    start: float
    end: float


@dataclass(frozen=True)
class LandingInterval:
    """Maximal span of legal landing positions at constant height."""

    lo: float
    hi: float
    z: float

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class Parkour:
    """Validated course: extent, blocks, restricted areas, safety margins.

    margin_h is the full horizontal no-land band centred on each block edge;
    margin_v is the minimum vertical clearance over block corners in flight.
    """

    x_min: float
    x_max: float
    obstacles: tuple[Obstacle, ...] = ()
    restricted: tuple[RestrictedArea, ...] = ()
    margin_h: float = 0.05
    margin_v: float = 0.05


def validate_parkour(parkour: Parkour) -> Parkour:
    """Return a normalized copy (blocks sorted, ids filled) or raise CourseError."""
    if not parkour.x_max > parkour.x_min:
        raise CourseError(f"extent is empty: [{parkour.x_min}, {parkour.x_max}]")
    if not (parkour.margin_h > 0.0 and parkour.margin_v > 0.0):
        raise CourseError("margins must be positive")

    obstacles = sorted(parkour.obstacles, key=lambda o: o.front)
    used_ids: set[str] = {o.uid for o in obstacles if o.uid is not None}
    normalized: list[Obstacle] = []
    serial = 0
    for obs in obstacles:
        if not obs.width > 0.0:
            raise CourseError(f"obstacle has non-positive width: {obs}")
        if not obs.height > 0.0:
            raise CourseError(f"obstacle has non-positive height: {obs}")
        if obs.front < parkour.x_min or obs.back > parkour.x_max:
            raise CourseError(f"obstacle outside extent: {obs}")
        uid = obs.uid
        if uid is None:
            while f"k{serial}" in used_ids:
                serial += 1
            uid = f"k{serial}"
            used_ids.add(uid)
            obs = replace(obs, uid=uid)
        normalized.append(obs)
    ids = [o.uid for o in normalized]
    if len(set(ids)) != len(ids):
        raise CourseError(f"duplicate obstacle ids: {ids}")
    for prev, cur in zip(normalized, normalized[1:]):
        if cur.front <= prev.back:
            raise CourseError(
                f"obstacles overlap or touch: {prev.uid} [{prev.front}, {prev.back}] "
                f"and {cur.uid} [{cur.front}, {cur.back}]"
            )

    areas = sorted(parkour.restricted, key=lambda r: r.start)
    for area in areas:
        if not area.end > area.start:
            raise CourseError(f"restricted area has non-positive width: {area}")
        if area.start < parkour.x_min or area.end > parkour.x_max:
            raise CourseError(f"restricted area outside extent: {area}")

    return replace(parkour, obstacles=tuple(normalized), restricted=tuple(areas))


def locate(parkour: Parkour, x: float) -> float:
    """Terrain height under x.  Block spans are closed: locate(front) == height."""
    if x < parkour.x_min or x > parkour.x_max:
        raise OutOfExtent(f"x={x} outside [{parkour.x_min}, {parkour.x_max}]")
    for obs in parkour.obstacles:
        if obs.front <= x <= obs.back:
            return obs.height
    return 0.0


def _subtract(spans: list[tuple[float, float]], cut_lo: float, cut_hi: float) -> list[tuple[float, float]]:
    """Remove [cut_lo, cut_hi] from every span in the list."""
    out: list[tuple[float, float]] = []
    for lo, hi in spans:
        if cut_hi <= lo or cut_lo >= hi:
            out.append((lo, hi))
            continue
        if cut_lo > lo:
            out.append((lo, cut_lo))
        if cut_hi < hi:
            out.append((cut_hi, hi))
    return out


def knee_shadow(height: float, z_land: float, margin_v: float,
                knee_dx: float, knee_dz: float) -> float:
    """Unlandable width behind a block's back edge due to the trailing knee.

    A foot touching down less than knee_dx past the edge leaves the knee on
    the wrong side of the back plane, below the top; slightly past that the
    knee crosses the plane so late in the descent that it cannot satisfy the
    vertical clearance.  The extra half-rise term is slack for that second
    regime.  Zero when the knee rides high enough to clear anyway.
    """
    rise = height + margin_v - z_land - knee_dz
    if knee_dx <= 0.0 or rise <= 0.0:
        return 0.0
    return knee_dx + 0.5 * rise


def landing_intervals(parkour: Parkour, lo: float, hi: float,
                      knee_dx: float = 0.0, knee_dz: float = 0.0,
                      front_standoff: float = 0.0) -> list[LandingInterval]:
    """Maximal legal landing spans with their heights, within [lo, hi].

    Legal means: at least margin_h/2 away from every block edge, outside
    every restricted area, and (when knee offsets are given) beyond the knee
    shadow of any block edge the landing would have just crossed.  Each
    returned span therefore has constant height.  The query window is
    clipped to the course extent.

    front_standoff > 0 additionally retracts a span's end by that fraction
    of the upcoming rise whenever the span runs out against a higher block's
    front.  A stance parked on the plane needs a near-vertical jump whose
    clearance degrades by ~d/cos^2(theta) per radian of launch error, so a
    planner that wants its plans to survive execution jitter keeps takeoffs
    off the wall.  Zero keeps the spans purely legal.
    """
    lo = max(lo, parkour.x_min)
    hi = min(hi, parkour.x_max)
    if not hi > lo:
        return []
    spans = [(lo, hi)]
    half = 0.5 * parkour.margin_h
    for obs in parkour.obstacles:
        spans = _subtract(spans, obs.front - half, obs.front + half)
        spans = _subtract(spans, obs.back - half, obs.back + half)
    for area in parkour.restricted:
        spans = _subtract(spans, area.start, area.end)
    out: list[LandingInterval] = []
    for s_lo, s_hi in spans:
        if s_hi - s_lo <= 1e-12:
            continue
        z = locate(parkour, 0.5 * (s_lo + s_hi))
        if knee_dx > 0.0:
            for obs in parkour.obstacles:
                if s_lo < obs.back - 1e-9:
                    continue
                shadow = knee_shadow(obs.height, z, parkour.margin_v,
                                     knee_dx, knee_dz)
                if shadow > 0.0:
                    s_lo = max(s_lo, obs.back + half + shadow)
        if front_standoff > 0.0:
            for obs in parkour.obstacles:
                rise = obs.height + parkour.margin_v - z
                if rise <= 0.0 or s_lo >= obs.front:
                    continue
                room = front_standoff * rise
                edge = obs.front - half
                if s_hi > edge - room:
                    s_hi = min(s_hi, edge - room)
        if s_hi - s_lo <= 1e-12:
            continue
        out.append(LandingInterval(s_lo, s_hi, z))
    return out


# --- environment edits ------------------------------------------------------


@dataclass(frozen=True)
class AddObstacle:
    obstacle: Obstacle


@dataclass(frozen=True)
class MoveObstacle:
    uid: str
    front: float
    back: float
    height: float | None = None  # None keeps the current height


@dataclass(frozen=True)
class RemoveObstacle:
    uid: str


@dataclass(frozen=True)
class AddRestrictedArea:
    area: RestrictedArea


@dataclass(frozen=True)
class RemoveRestrictedArea:
    index: int


EnvironmentUpdate = (
    AddObstacle | MoveObstacle | RemoveObstacle | AddRestrictedArea | RemoveRestrictedArea
)


def apply_update(parkour: Parkour, update: EnvironmentUpdate) -> Parkour:
    """Apply one edit and return a new validated course; the input is untouched."""
    if isinstance(update, AddObstacle):
        new = parkour.obstacles + (update.obstacle,)
        return validate_parkour(replace(parkour, obstacles=new))
    if isinstance(update, MoveObstacle):
        found = False
        moved: list[Obstacle] = []
        for obs in parkour.obstacles:
            if obs.uid == update.uid:
                found = True
                height = obs.height if update.height is None else update.height
                obs = replace(obs, front=update.front, back=update.back, height=height)
            moved.append(obs)
        if not found:
            raise UnknownId(f"no obstacle with id {update.uid!r}")
        return validate_parkour(replace(parkour, obstacles=tuple(moved)))
    if isinstance(update, RemoveObstacle):
        kept = tuple(o for o in parkour.obstacles if o.uid != update.uid)
        if len(kept) == len(parkour.obstacles):
            raise UnknownId(f"no obstacle with id {update.uid!r}")
        return validate_parkour(replace(parkour, obstacles=kept))
    if isinstance(update, AddRestrictedArea):
        new_areas = parkour.restricted + (update.area,)
        return validate_parkour(replace(parkour, restricted=new_areas))
    if isinstance(update, RemoveRestrictedArea):
        if not 0 <= update.index < len(parkour.restricted):
            raise UnknownId(f"no restricted area at index {update.index}")
        kept_areas = tuple(
            a for i, a in enumerate(parkour.restricted) if i != update.index
        )
        return validate_parkour(replace(parkour, restricted=kept_areas))
    raise TypeError(f"unsupported update: {update!r}")
