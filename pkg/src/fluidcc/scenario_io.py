"""Plain-text scenario files and their parser.

A scenario file is INI-style with sections and key = value lines.  Keys
carry their unit in the name (capacity_mbps, delay_s, alpha_pkts) so a file
never needs a comment to be unambiguous.  Example:

    [scenario]
    name = single_bottleneck_demo
    duration_s = 150
    dt_s = 0.001
    seed = 1
    output_interval_s = 0.01

    [topology]
    kind = single_bottleneck
    n_flows = 9
    capacity_mbps = 100
    access_delay_s = 0.0025
    bottleneck_delay_s = 0.0025
    alpha_pkts = 50

    [flow f8]
    start_s = 40
    estimator = delta_probe
    theta = -0.5

A [topology] section generates links and flows from a named template
(single_bottleneck or parking_lot); [flow <id>] and [link <id>] sections
then override individual fields.  Without [topology] every link and flow is
declared explicitly and flows must give a path.  A [background] section adds
an on/off Pareto source.

All parse and validation problems raise ScenarioFormatError carrying the
file name and line number, so the command line tool can print a single
pointed diagnostic and exit.
"""

from __future__ import annotations

import dataclasses

from . import model

SCENARIO_SUFFIX = ".ini"

_TOPOLOGY_KINDS = ("single_bottleneck", "parking_lot")

_ESTIMATOR_KEYS = (
    "estimator",
    "theta",
    "t_eps_s",
    "pause_s",
    "stable_window_rtts",
    "stable_tol",
    "max_retries",
)


class ScenarioFormatError(ValueError):
    """A scenario file could not be parsed or failed validation."""


class Section:
    """One parsed [section] with line numbers for error reporting."""

    def __init__(self, path, name, line):
        self.path = path
        self.name = name
        self.line = line
        self.items = {}      # key -> (raw value, line number)
        self.consumed = set()

    def fail(self, message, line=None):
        where = self.line if line is None else line
        raise ScenarioFormatError(f"{self.path}:{where}: {message}")

    def add(self, key, value, line):
        if key in self.items:
            self.fail(f"duplicate key {key!r} in [{self.name}]", line)
        self.items[key] = (value, line)

    def has(self, key):
        return key in self.items

    def raw(self, key, default=None):
        self.consumed.add(key)
        if key not in self.items:
            return default
        return self.items[key][0]

    def line_of(self, key):
        return self.items[key][1] if key in self.items else self.line

    def getstr(self, key, default=None, required=False):
        value = self.raw(key, default)
        if value is None and required:
            self.fail(f"[{self.name}] is missing required key {key!r}")
        return value

    def getfloat(self, key, default=None, required=False):
        value = self.raw(key)
        if value is None:
            if required:
                self.fail(f"[{self.name}] is missing required key {key!r}")
            return default
        try:
            return float(value)
        except ValueError:
            self.fail(f"{key} must be a number, got {value!r}", self.line_of(key))

    def getint(self, key, default=None, required=False):
        value = self.raw(key)
        if value is None:
            if required:
                self.fail(f"[{self.name}] is missing required key {key!r}")
            return default
        try:
            return int(value)
        except ValueError:
            self.fail(f"{key} must be an integer, got {value!r}", self.line_of(key))

    def getlist(self, key, default=None, required=False):
        value = self.raw(key)
        if value is None:
            if required:
                self.fail(f"[{self.name}] is missing required key {key!r}")
            return default
        parts = [p.strip() for p in value.split(",")]
        parts = [p for p in parts if p]
        if not parts:
            self.fail(f"{key} must list at least one item", self.line_of(key))
        return parts

    def get_auto_float(self, key, default=None):
        """A float, or the word 'auto' meaning 'decide at run time' (None)."""
        value = self.raw(key)
        if value is None:
            return default
        if value.lower() == "auto":
            return None
        try:
            return float(value)
        except ValueError:
            self.fail(f"{key} must be a number or 'auto', got {value!r}",
                      self.line_of(key))

    def get_rate(self, key_base, default=None, required=False):
        """Read <base>_pkts_per_s or <base>_mbps, whichever is present."""
        pkts_key = key_base + "_pkts_per_s"
        mbps_key = key_base + "_mbps"
        if self.has(pkts_key) and self.has(mbps_key):
            self.fail(f"give either {pkts_key} or {mbps_key}, not both",
                      self.line_of(mbps_key))
        if self.has(pkts_key):
            return self.getfloat(pkts_key)
        if self.has(mbps_key):
            return model.mbps_to_pkts_per_s(self.getfloat(mbps_key))
        if required:
            self.fail(f"[{self.name}] needs {pkts_key} or {mbps_key}")
        return default

    def finish(self):
        """Reject keys nothing consumed; typos should not pass silently."""
        for key, (_, line) in self.items.items():
            if key not in self.consumed:
                self.fail(f"unknown key {key!r} in [{self.name}]", line)


def parse_sections(text, path="<string>"):
    """Split file text into Sections, preserving line numbers."""
    sections = []
    current = None
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#") or line.startswith(";"):
            continue
        if " #" in line:
            line = line.split(" #", 1)[0].rstrip()
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if not name:
                raise ScenarioFormatError(f"{path}:{line_no}: empty section name")
            current = Section(path, name, line_no)
            sections.append(current)
            continue
        if "=" not in line:
            raise ScenarioFormatError(
                f"{path}:{line_no}: expected 'key = value' or '[section]', "
                f"got {line!r}"
            )
        if current is None:
            raise ScenarioFormatError(
                f"{path}:{line_no}: key outside of any [section]"
            )
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ScenarioFormatError(f"{path}:{line_no}: empty key")
        current.add(key, value, line_no)
    return sections


def _estimator_from(sec, base):
    """Build an EstimatorSpec from a section, starting from base.

    Switching kind resets the tuning knobs to their defaults so a probe
    flow does not inherit, say, a pause duration meant for another scheme.
    """
    kind = sec.getstr("estimator")
    if kind is not None and kind not in model.ESTIMATOR_KINDS:
        sec.fail(f"estimator must be one of {', '.join(model.ESTIMATOR_KINDS)}, "
                 f"got {kind!r}", sec.line_of("estimator"))
    if kind is not None and kind != base.kind:
        base = model.EstimatorSpec(kind=kind)
    changes = {}
    if sec.has("theta"):
        changes["theta"] = sec.getfloat("theta")
    if sec.has("t_eps_s"):
        changes["t_eps"] = sec.get_auto_float("t_eps_s")
    if sec.has("pause_s"):
        changes["pause_duration"] = sec.get_auto_float("pause_s")
    if sec.has("stable_window_rtts"):
        changes["stable_window_rtts"] = sec.getfloat("stable_window_rtts")
    if sec.has("stable_tol"):
        changes["stable_tol"] = sec.getfloat("stable_tol")
    if sec.has("max_retries"):
        changes["max_retries"] = sec.getint("max_retries")
    if changes:
        base = dataclasses.replace(base, **changes)
    return base


def _build_from_topology(sec):
    kind = sec.getstr("kind", required=True)
    if kind not in _TOPOLOGY_KINDS:
        sec.fail(f"kind must be one of {', '.join(_TOPOLOGY_KINDS)}, got {kind!r}",
                 sec.line_of("kind"))
    estimator = _estimator_from(sec, model.EstimatorSpec())
    if kind == "single_bottleneck":
        topo = model.build_single_bottleneck(
            n_flows=sec.getint("n_flows", required=True),
            capacity=sec.get_rate("capacity", required=True),
            access_delay=sec.getfloat("access_delay_s", 0.0),
            bottleneck_delay=sec.getfloat("bottleneck_delay_s", required=True),
            alpha=sec.getfloat("alpha_pkts", 50.0),
            start_gap=sec.getfloat("start_gap_s", 0.0),
            gamma=sec.getfloat("gamma", 0.5),
            estimator=estimator,
            access_capacity=sec.get_rate("access_capacity"),
            buffer_limit=sec.getfloat("buffer_limit_pkts"),
        )
    else:
        topo = model.build_parking_lot(
            n_sources=sec.getint("n_sources", required=True),
            link_capacity=sec.get_rate("capacity", required=True),
            link_delay=sec.getfloat("link_delay_s", required=True),
            alpha=sec.getfloat("alpha_pkts", 50.0),
            gamma=sec.getfloat("gamma", 0.5),
            estimator=estimator,
        )
    sec.finish()
    return topo


def _link_from(sec, link_id, existing):
    if existing is None:
        capacity = sec.get_rate("capacity", required=True)
        delay = sec.getfloat("delay_s", 0.0)
        buffer_limit = sec.getfloat("buffer_limit_pkts")
    else:
        capacity = sec.get_rate("capacity", existing.capacity)
        delay = sec.getfloat("delay_s", existing.prop_delay)
        buffer_limit = sec.getfloat("buffer_limit_pkts", existing.buffer_limit)
    sec.finish()
    return model.LinkSpec(link_id, capacity, delay, buffer_limit)


def _flow_from(sec, flow_id, existing):
    if existing is None:
        path = sec.getlist("path", required=True)
        base = model.FlowSpec(id=flow_id, path=tuple(path))
    else:
        path = sec.getlist("path", list(existing.path))
        base = existing
    changes = {"path": tuple(path)}
    if sec.has("start_s"):
        changes["start_time"] = sec.getfloat("start_s")
    if sec.has("alpha_pkts"):
        changes["alpha"] = sec.getfloat("alpha_pkts")
    if sec.has("gamma"):
        changes["gamma"] = sec.getfloat("gamma")
    if sec.has("reverse_delay_s"):
        changes["reverse_delay"] = sec.getfloat("reverse_delay_s")
    if sec.has("kappa"):
        changes["kappa"] = sec.getstr("kappa")
    changes["estimator"] = _estimator_from(sec, base.estimator)
    sec.finish()
    return dataclasses.replace(base, **changes)


def _background_from(sec):
    spec = model.ParetoSourceSpec(
        path=tuple(sec.getlist("path", required=True)),
        shape=sec.getfloat("shape", 1.25),
        mean_burst=sec.getfloat("mean_burst_s", 0.1),
        mean_idle=sec.getfloat("mean_idle_s", 0.1),
        peak_rate=sec.get_rate("peak_rate", required=True),
    )
    sec.finish()
    return spec


def parse_scenario(text, path="<string>"):
    """Parse scenario file text into a validated Scenario."""
    sections = parse_sections(text, path)
    by_kind = {}
    link_secs = []
    flow_secs = []
    for sec in sections:
        if sec.name in ("scenario", "topology", "background"):
            if sec.name in by_kind:
                sec.fail(f"duplicate [{sec.name}] section")
            by_kind[sec.name] = sec
        elif sec.name.startswith("link "):
            link_id = sec.name[5:].strip()
            if any(link_id == seen for seen, _ in link_secs):
                sec.fail(f"duplicate [link {link_id}] section")
            link_secs.append((link_id, sec))
        elif sec.name.startswith("flow "):
            flow_id = sec.name[5:].strip()
            if any(flow_id == seen for seen, _ in flow_secs):
                sec.fail(f"duplicate [flow {flow_id}] section")
            flow_secs.append((flow_id, sec))
        else:
            sec.fail(f"unknown section [{sec.name}]")

    if "scenario" not in by_kind:
        raise ScenarioFormatError(f"{path}:1: missing [scenario] section")
    scn = by_kind["scenario"]
    name = scn.getstr("name", "scenario")
    duration = scn.getfloat("duration_s", required=True)
    dt = scn.getfloat("dt_s", 1e-3)
    seed = scn.getint("seed", 1)
    output_interval = scn.getfloat("output_interval_s", 0.1)
    scn.finish()

    if "topology" in by_kind:
        try:
            topo = _build_from_topology(by_kind["topology"])
        except model.ValidationError as exc:
            by_kind["topology"].fail(str(exc))
        links = dict(topo.link_map())
        flows = dict(topo.flow_map())
        order = list(links)
        flow_order = list(flows)
    else:
        links = {}
        flows = {}
        order = []
        flow_order = []

    for link_id, sec in link_secs:
        if not link_id:
            sec.fail("link section needs a name: [link <id>]")
        try:
            links[link_id] = _link_from(sec, link_id, links.get(link_id))
        except model.ValidationError as exc:
            sec.fail(str(exc))
        if link_id not in order:
            order.append(link_id)
    for flow_id, sec in flow_secs:
        if not flow_id:
            sec.fail("flow section needs a name: [flow <id>]")
        try:
            flows[flow_id] = _flow_from(sec, flow_id, flows.get(flow_id))
        except model.ValidationError as exc:
            sec.fail(str(exc))
        if flow_id not in flow_order:
            flow_order.append(flow_id)

    background = None
    if "background" in by_kind:
        try:
            background = _background_from(by_kind["background"])
        except model.ValidationError as exc:
            by_kind["background"].fail(str(exc))

    topology = model.Topology(
        tuple(links[i] for i in order),
        tuple(flows[i] for i in flow_order),
    )
    scenario = model.Scenario(
        topology=topology,
        duration=duration,
        dt=dt,
        seed=seed,
        background=background,
        output_interval=output_interval,
        name=name,
    )
    try:
        scenario.validate()
    except model.ValidationError as exc:
        raise ScenarioFormatError(f"{path}:{scn.line}: {exc}") from exc
    return scenario


def load_scenario(path):
    """Read and parse a scenario file from disk."""
    with open(path, "r") as fh:
        text = fh.read()
    return parse_scenario(text, str(path))
