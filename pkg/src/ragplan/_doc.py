"""Strict JSON document reading and canonical writing.

All ragplan documents are JSON objects tagged with a ``schema`` string.
Readers reject unknown and missing fields and report the offending path.
"""
import json
import math

from .errors import SchemaError

_MISSING = object()


def loads(text, schema=None):
    """Parse ``text`` as a JSON object, optionally checking its schema tag."""
    if not text.strip():
        obj = {}
    else:
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(("", f"malformed document at line {exc.lineno} column {exc.colno}: {exc.msg}")) from None
    if not isinstance(obj, dict):
        raise SchemaError(("", "document must be a JSON object"))
    return obj


def canon_num(x):
    """Number in canonical form: integral values become ints, others floats."""
    if isinstance(x, bool):
        raise TypeError("bool is not a number")
    if isinstance(x, int):
        return x
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"non-finite number {x!r}")
    if x.is_integer() and abs(x) < 2**53:
        return int(x)
    return x


def dumps(obj):
    """Canonical text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False) + "\n"


def round_sig(x, digits=12):
    """Round a float to ``digits`` significant digits for cross-platform output."""
    if x == 0 or not math.isfinite(x):
        return x
    return canon_num(float(f"{x:.{digits}g}"))


class Reader:
    """Cursor over one JSON object that records the path of every access."""

    def __init__(self, obj, path="", fields=None):
        if not isinstance(obj, dict):
            raise SchemaError((path, "expected an object"))
        self.obj = obj
        self.path = path
        self._seen = set()
        if fields is not None:
            extra = sorted(set(obj) - set(fields))
            if extra:
                raise SchemaError([(self._sub(k), "unknown field") for k in extra])

    def _sub(self, key):
        return f"{self.path}.{key}" if self.path else key

    def get(self, key, kind, default=_MISSING):
        self._seen.add(key)
        path = self._sub(key)
        if key not in self.obj:
            if default is _MISSING:
                raise SchemaError((path, "required"))
            return default
        value = self.obj[key]
        return _coerce(value, kind, path)

    def obj_at(self, key, optional=False):
        self._seen.add(key)
        path = self._sub(key)
        if key not in self.obj:
            if optional:
                return None
            raise SchemaError((path, "required"))
        value = self.obj[key]
        if value is None and optional:
            return None
        return Reader(value, path)

    def list_at(self, key):
        self._seen.add(key)
        path = self._sub(key)
        if key not in self.obj:
            raise SchemaError((path, "required"))
        value = self.obj[key]
        if not isinstance(value, list):
            raise SchemaError((path, "expected an array"))
        return [(f"{path}[{i}]", v) for i, v in enumerate(value)]

    def raw(self, key, default=_MISSING):
        self._seen.add(key)
        if key not in self.obj:
            if default is _MISSING:
                raise SchemaError((self._sub(key), "required"))
            return default
        return self.obj[key]

    def require(self, *keys):
        """Report every missing key at once, in the given order."""
        missing = [(self._sub(k), "required") for k in keys if k not in self.obj]
        if missing:
            raise SchemaError(missing)

    def done(self):
        """Reject any field that was never read."""
        extra = sorted(set(self.obj) - self._seen)
        if extra:
            raise SchemaError([(self._sub(k), "unknown field") for k in extra])


def _coerce(value, kind, path):
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError((path, "expected an integer"))
        if isinstance(value, float) and not value.is_integer():
            raise SchemaError((path, "expected an integer"))
        return int(value)
    if kind == "num":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError((path, "expected a number"))
        try:
            return canon_num(value)
        except ValueError:
            raise SchemaError((path, "expected a finite number")) from None
    if kind == "str":
        if not isinstance(value, str):
            raise SchemaError((path, "expected a string"))
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise SchemaError((path, "expected a boolean"))
        return value
    if kind == "any":
        return value
    raise AssertionError(kind)


def check_schema(reader, expected):
    tag = reader.get("schema", "str")
    if tag != expected:
        raise SchemaError(("schema", f"expected {expected!r}, got {tag!r}"))


def collect(issues, fn, *args):
    """Run ``fn`` and fold its SchemaError issues into ``issues``."""
    try:
        return fn(*args)
    except SchemaError as exc:
        issues.extend(exc.issues)
        return None
