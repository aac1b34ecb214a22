"""Deterministic scene layout.

Pure transformation from a validated cloud snapshot (plus metering and
in-flight operations) to plate/box geometry:

* a hypervisor becomes a plate of one grid cell per VCPU, shaped as the
  most-square divisor pair (32 VCPUs -> 8 wide x 4 deep);
* an instance becomes a box whose base area equals its flavour's VCPU
  count and whose volume equals ram_mb / 512, so the 1-VCPU/512 MB
  flavour is the unit cube;
* boxes fill a plate shelf-style: left to right along x, opening a new
  row further along z when the row is full;
* project identity maps to a golden-angle hue, suspended/shut-off
  instances render translucent, and ePDU watts shade a plate from light
  to dark.

Everything here is a pure function of its inputs: equal inputs yield
byte-identical canonical serialisations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping

from .model import (
    CloudState,
    FlavourSpec,
    HostState,
    VmStatus,
    canonical_dumps,
    validate,
)

log = logging.getLogger(__name__)

RAM_MB_PER_UNIT_VOLUME = 512.0
MIN_BOX_HEIGHT = 0.25
GOLDEN_ANGLE_DEG = 137.508

TRANSLUCENT_STATUSES = frozenset({VmStatus.SHUTOFF, VmStatus.SUSPENDED})


class GeometryError(Exception):
    """A box cannot be placed at all (wider than its plate)."""


class EnergyRangeError(ValueError):
    """Misconfigured watts range (min >= max)."""


class InvalidStateError(Exception):
    """Scene build refused: the snapshot failed validation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(str(v) for v in self.violations))


@dataclass(frozen=True)
class SceneConfig:
    """Calibration the layout cannot derive from the cloud itself."""

    energy_min_watts: float = 50.0
    energy_max_watts: float = 400.0


@dataclass(frozen=True)
class PlateGeometry:
    hypervisor_id: str
    width_x: int
    depth_z: int
    energy_shade: float | None = None
    is_down: bool = False
    is_blinking: bool = False
    overcommitted: bool = False

    def to_doc(self) -> dict[str, Any]:
        return {
            "hypervisor_id": self.hypervisor_id,
            "width_x": self.width_x,
            "depth_z": self.depth_z,
            "energy_shade": None if self.energy_shade is None else round(self.energy_shade, 4),
            "is_down": self.is_down,
            "is_blinking": self.is_blinking,
            "overcommitted": self.overcommitted,
        }


@dataclass(frozen=True)
class BoxGeometry:
    instance_id: str
    hypervisor_id: str
    width_x: int
    depth_z: int
    height_y: float
    pos_x: int = 0
    pos_z: int = 0
    colour_hue: float = 0.0
    translucent: bool = False
    is_blinking: bool = False

    def to_doc(self) -> dict[str, Any]:
        return {
            "instance_id": self.instance_id,
            "hypervisor_id": self.hypervisor_id,
            "width_x": self.width_x,
            "depth_z": self.depth_z,
            "height_y": round(self.height_y, 2),
            "pos_x": self.pos_x,
            "pos_z": self.pos_z,
            "colour_hue": round(self.colour_hue, 3),
            "translucent": self.translucent,
            "is_blinking": self.is_blinking,
        }


@dataclass(frozen=True)
class SceneSnapshot:
    at_seq: int
    plates: tuple[PlateGeometry, ...] = ()
    boxes: tuple[BoxGeometry, ...] = ()
    unplaced: tuple[str, ...] = ()

    def to_doc(self) -> dict[str, Any]:
        return {
            "at_seq": self.at_seq,
            "plates": [p.to_doc() for p in self.plates],
            "boxes": [b.to_doc() for b in self.boxes],
            "unplaced": list(self.unplaced),
        }

    def to_canonical_json(self) -> str:
        return canonical_dumps(self.to_doc())


def most_square_dims(cells: int) -> tuple[int, int]:
    """Split `cells` into (width_x, depth_z) with width * depth == cells.

    Depth is the largest divisor of `cells` not exceeding its square
    root, so the rectangle is as square as the divisors allow and never
    deeper than wide.
    """
    if cells < 1:
        raise ValueError(f"cell count must be >= 1, got {cells}")
    depth = math.isqrt(cells)
    while cells % depth:
        depth -= 1
    return cells // depth, depth


def footprint(flavour: FlavourSpec) -> tuple[int, int, float]:
    """(width_x, depth_z, height_y) of a flavour's box.

    Base area equals the VCPU count; height makes the volume equal
    ram_mb / 512, clamped to 0.25 so tiny-RAM flavours stay visible.
    """
    width, depth = most_square_dims(flavour.vcpus)
    height = flavour.ram_mb / (RAM_MB_PER_UNIT_VOLUME * flavour.vcpus)
    return width, depth, max(height, MIN_BOX_HEIGHT)


def plate_dims(vcpus_total: int) -> tuple[int, int]:
    """Plate (width_x, depth_z): one grid cell per VCPU, most-square."""
    return most_square_dims(vcpus_total)


def place_boxes(
    plate_width: int, plate_depth: int, boxes: Iterable[BoxGeometry]
) -> tuple[list[BoxGeometry], bool]:
    """Shelf-place boxes on a plate; returns (positioned, overcommitted).

    Boxes are taken in canonical order: descending depth, then
    descending width, then ascending instance id. A row fills left to
    right from x=0; when a box no longer fits the remaining x extent, a
    new row opens at z = previous row's z + its tallest depth. Rows may
    spill past the plate's far edge -- that raises the overcommitted
    flag, never an error. Only a box wider than the plate is fatal.
    """
    ordered = sorted(boxes, key=lambda b: (-b.depth_z, -b.width_x, b.instance_id))
    placed: list[BoxGeometry] = []
    cursor_x = 0
    row_z = 0
    row_depth = 0
    for box in ordered:
        if box.width_x > plate_width:
            raise GeometryError(
                f"instance {box.instance_id}: box width {box.width_x} exceeds plate width {plate_width}"
            )
        if cursor_x + box.width_x > plate_width:
            row_z += row_depth
            cursor_x = 0
            row_depth = 0
        placed.append(replace(box, pos_x=cursor_x, pos_z=row_z))
        cursor_x += box.width_x
        row_depth = max(row_depth, box.depth_z)
    overcommitted = any(b.pos_z + b.depth_z > plate_depth for b in placed)
    return placed, overcommitted


def project_colour(project_id: str, project_ids: Iterable[str]) -> float:
    """Golden-angle hue for a project: (k * 137.508) mod 360.

    k is the project's index in the id-sorted list, so the hue is stable
    across polls while the project set is unchanged and new projects
    land far from existing hues.
    """
    ordered = sorted(set(project_ids))
    try:
        k = ordered.index(project_id)
    except ValueError:
        raise KeyError(f"unknown project {project_id}") from None
    return (k * GOLDEN_ANGLE_DEG) % 360.0


def energy_shade(watts: float, min_watts: float, max_watts: float) -> float:
    """Linear watts -> darkness in [0, 1], clamped outside the range."""
    if min_watts >= max_watts:
        raise EnergyRangeError(f"min_watts {min_watts} must be below max_watts {max_watts}")
    return min(1.0, max(0.0, (watts - min_watts) / (max_watts - min_watts)))


def build_scene(
    state: CloudState,
    readings: Mapping[str, float] | None = None,
    pending_subjects: Iterable[str] = (),
    config: SceneConfig = SceneConfig(),
) -> SceneSnapshot:
    """Derive the full scene for one snapshot.

    One plate per hypervisor, one box per instance with a resolvable
    host; instances without one, or whose box is too wide for the host's
    plate, are listed as unplaced. `readings` maps hypervisor id to
    watts; `pending_subjects` are the instance/host ids currently
    awaiting a cloud confirmation and therefore blinking.
    """
    violations = validate(state)
    if violations:
        raise InvalidStateError(violations)

    readings = dict(readings or {})
    blinking = set(pending_subjects)
    flavours = {f.id: f for f in state.flavours}
    project_ids = [p.id for p in state.projects]

    plates: list[PlateGeometry] = []
    boxes: list[BoxGeometry] = []
    unplaced: list[str] = []

    by_host: dict[str, list] = {h.id: [] for h in state.hypervisors}
    for inst in state.instances:
        if inst.hypervisor_id is None or inst.hypervisor_id not in by_host:
            unplaced.append(inst.id)
        else:
            by_host[inst.hypervisor_id].append(inst)

    for hv in state.hypervisors:
        width, depth = plate_dims(hv.vcpus_total)
        raw = []
        for inst in by_host[hv.id]:
            box_w, box_d, box_h = footprint(flavours[inst.flavour_id])
            if box_w > width:
                # heavily overcommitted small host: the box cannot fit any row;
                # keep rendering the rest of the scene and list it as unplaced
                log.warning(
                    "instance %s (box %dx%d) is wider than plate %s (%dx%d); left unplaced",
                    inst.id, box_w, box_d, hv.id, width, depth,
                )
                unplaced.append(inst.id)
                continue
            raw.append(
                BoxGeometry(
                    instance_id=inst.id,
                    hypervisor_id=hv.id,
                    width_x=box_w,
                    depth_z=box_d,
                    height_y=box_h,
                    colour_hue=project_colour(inst.project_id, project_ids),
                    translucent=inst.status in TRANSLUCENT_STATUSES,
                    is_blinking=inst.id in blinking,
                )
            )
        placed, overcommitted = place_boxes(width, depth, raw)
        boxes.extend(placed)
        shade = None
        if hv.id in readings:
            shade = energy_shade(readings[hv.id], config.energy_min_watts, config.energy_max_watts)
        plates.append(
            PlateGeometry(
                hypervisor_id=hv.id,
                width_x=width,
                depth_z=depth,
                energy_shade=shade,
                is_down=hv.state is HostState.DOWN,
                is_blinking=hv.id in blinking,
                overcommitted=overcommitted,
            )
        )

    boxes.sort(key=lambda b: b.instance_id)
    return SceneSnapshot(
        at_seq=state.poll_seq,
        plates=tuple(plates),
        boxes=tuple(boxes),
        unplaced=tuple(sorted(unplaced)),
    )
