"""Hardware pools: devices with roofline rates, capacity and hourly cost."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import _doc
from .errors import CapacityError, SchemaError

SCHEMA = "rag-hw/1"


@dataclass(frozen=True)
class Device:
    """``count`` identical units of one device type.

    ``efficiency`` is the achievable fraction of peak; ``None`` defers to
    the cost model's default.
    """

    id: str
    kind: str
    peak_flops: float
    mem_bw: float
    mem_capacity: float
    cost_per_hour: float
    count: int = 1
    efficiency: Optional[float] = None


@dataclass(frozen=True)
class HardwarePool:
    devices: tuple
    interconnect_bw: float

    def __post_init__(self):
        object.__setattr__(self, "devices", tuple(self.devices))
        issues = []
        seen = set()
        for i, d in enumerate(self.devices):
            issues.extend(_device_issues(d, f"devices[{i}]"))
            if d.id in seen:
                issues.append((f"devices[{i}].id", f"duplicate device id {d.id!r}"))
            seen.add(d.id)
        if not self.interconnect_bw > 0:
            issues.append(("interconnect_bw", "interconnect_bw must be > 0"))
        if issues:
            raise SchemaError(issues)

    def device(self, device_id):
        for d in self.devices:
            if d.id == device_id:
                return d
        raise KeyError(device_id)

    @property
    def device_ids(self):
        return sorted(d.id for d in self.devices)


def _device_issues(d, path):
    out = []
    for name in ("peak_flops", "mem_bw", "mem_capacity", "cost_per_hour"):
        if not getattr(d, name) > 0:
            out.append((f"{path}.{name}", f"{name} must be > 0"))
    if not (isinstance(d.count, int) and d.count >= 1):
        out.append((f"{path}.count", "count ≥ 1 required"))
    if d.efficiency is not None and not 0 < d.efficiency <= 1:
        out.append((f"{path}.efficiency", "efficiency must lie in (0, 1]"))
    return out


def pool_cost(pool, allocation):
    """Hourly cost of using ``allocation`` (device id -> units)."""
    total = 0.0
    for dev_id in sorted(allocation):
        units = allocation[dev_id]
        try:
            d = pool.device(dev_id)
        except KeyError:
            raise CapacityError(f"unknown device {dev_id!r}") from None
        if units < 0 or units > d.count:
            raise CapacityError(f"device {dev_id!r}: {units} units requested, {d.count} available")
        total += units * d.cost_per_hour
    return total


def to_doc(pool):
    c = _doc.canon_num
    devices = []
    for d in pool.devices:
        doc = {
            "id": d.id, "kind": d.kind, "peak_flops": c(d.peak_flops), "mem_bw": c(d.mem_bw),
            "mem_capacity": c(d.mem_capacity), "cost_per_hour": c(d.cost_per_hour), "count": d.count,
        }
        if d.efficiency is not None:
            doc["efficiency"] = c(d.efficiency)
        devices.append(doc)
    return {"schema": SCHEMA, "interconnect_bw": c(pool.interconnect_bw), "devices": devices}


def serialize(pool):
    return _doc.dumps(to_doc(pool))


def from_doc(obj):
    r = _doc.Reader(obj)
    r.require("devices", "interconnect_bw", "schema")
    _doc.check_schema(r, SCHEMA)
    devices = []
    for p, raw in r.list_at("devices"):
        dr = _doc.Reader(raw, p)
        devices.append(Device(
            id=dr.get("id", "str"), kind=dr.get("kind", "str"),
            peak_flops=dr.get("peak_flops", "num"), mem_bw=dr.get("mem_bw", "num"),
            mem_capacity=dr.get("mem_capacity", "num"), cost_per_hour=dr.get("cost_per_hour", "num"),
            count=dr.get("count", "int", 1), efficiency=dr.get("efficiency", "num", None),
        ))
        dr.done()
    interconnect = r.get("interconnect_bw", "num")
    r.done()
    return HardwarePool(devices=devices, interconnect_bw=interconnect)


def load_pool(text):
    """Parse and invariant-check a ``rag-hw/1`` pool document."""
    return from_doc(_doc.loads(text))
