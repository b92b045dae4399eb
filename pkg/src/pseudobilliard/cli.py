"""Command line driver: ``psb <subcommand> -c config.json``.

Configs are JSON documents with ``"schema_version": 1`` and three blocks:

``model``
    exactly one of ``switched_arrival`` (``rates``, optional ``thresholds``
    and ``upper_thresholds``), ``polygon2d`` (``vertices``, ``edge_fields``,
    optional ``vertex_labels``) or ``switched_server`` (``base.vertices``,
    ``fields`` keyed by edge index, ``policy``, optional ``labels``).
``perturbation``
    optional ``cuts`` (list of ``{"normal", "offset"}`` meaning
    ``normal . x <= offset``) and ``packet_step``.
``run``
    ``iterations``, ``seed``, optional ``initial`` state, ``output`` path and
    a few subcommand knobs (``starts``, ``bins``, ``partition``).

CSV files use a fixed header and ``%.17g`` floats; JSON is written with
sorted keys, so identical inputs give byte-identical files.  Exit codes: 0
success, 2 configuration error, 3 dynamical error.
"""
from __future__ import annotations

import argparse
import copy
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis as an
from . import dynamics as dy
from .geometry import GeometryError
from .kernel import BACKEND
from .model import (ModelError, PacketScheme, SwitchedArrivalSpec, SwitchPolicy,
                    build_polygon_model, build_server_model, build_standard_model, polygon)

SCHEMA_VERSION = 1
MODEL_KINDS = ("switched_arrival", "polygon2d", "switched_server")
EXIT_OK, EXIT_CONFIG, EXIT_DYNAMICS = 0, 2, 3

COMMANDS = ("simulate", "return-map", "lyapunov", "chaos-cert", "markov-verify", "components",
            "orbits", "measure", "discretize", "server", "coupling")


class ConfigError(Exception):
    pass


class ConfigParse(ConfigError):
    pass


class SchemaViolation(ConfigError):
    pass


# -- configuration ------------------------------------------------------------

def _vec(x, what):
    try:
        a = [float(v) for v in x]
    except (TypeError, ValueError):
        raise SchemaViolation(f"{what} must be an array of numbers") from None
    if not all(math.isfinite(v) for v in a):
        raise SchemaViolation(f"{what} must be finite")
    return a


def _mat(x, what):
    if not isinstance(x, list) or not x:
        raise SchemaViolation(f"{what} must be a nonempty array of arrays")
    return [_vec(r, f"{what}[{i}]") for i, r in enumerate(x)]


def _only(d, allowed, what):
    if not isinstance(d, dict):
        raise SchemaViolation(f"{what} must be an object")
    extra = set(d) - set(allowed)
    if extra:
        raise SchemaViolation(f"unknown keys in {what}: {sorted(extra)}")


def _int(x, what, minimum=None):
    if isinstance(x, bool) or not isinstance(x, int):
        raise SchemaViolation(f"{what} must be an integer")
    if minimum is not None and x < minimum:
        raise SchemaViolation(f"{what} must be >= {minimum}")
    return x


@dataclass
class RunConfig:
    model_kind: str
    model: dict
    perturbation: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    name: str | None = None

    # parsing ---------------------------------------------------------------
    @classmethod
    def from_dict(cls, d):
        _only(d, ("schema_version", "name", "model", "perturbation", "run"), "config")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise SchemaViolation(f"schema_version must be {SCHEMA_VERSION}")
        m = d.get("model")
        if not isinstance(m, dict) or len(m) != 1 or next(iter(m)) not in MODEL_KINDS:
            raise SchemaViolation(f"model must hold exactly one of {list(MODEL_KINDS)}")
        kind = next(iter(m))
        body = m[kind]
        if kind == "switched_arrival":
            _only(body, ("rates", "thresholds", "upper_thresholds"), "switched_arrival")
            body = {k: _vec(v, f"switched_arrival.{k}") for k, v in body.items()}
            if "rates" not in body:
                raise SchemaViolation("switched_arrival needs rates")
            N = len(body["rates"])
            for k in ("thresholds", "upper_thresholds"):
                if k in body and len(body[k]) != N:
                    raise SchemaViolation(f"switched_arrival.{k} must have {N} entries")
            dim = N
        elif kind == "polygon2d":
            _only(body, ("vertices", "edge_fields", "vertex_labels"), "polygon2d")
            out = {"vertices": _mat(body.get("vertices"), "polygon2d.vertices"),
                   "edge_fields": _mat(body.get("edge_fields"), "polygon2d.edge_fields")}
            if len(out["edge_fields"]) != len(out["vertices"]):
                raise SchemaViolation("polygon2d needs one edge field per vertex")
            if any(len(r) != 2 for r in out["vertices"] + out["edge_fields"]):
                raise SchemaViolation("polygon2d points and fields are 2-vectors")
            if "vertex_labels" in body:
                lab = body["vertex_labels"]
                if not isinstance(lab, str) or len(lab) != len(out["vertices"]):
                    raise SchemaViolation("vertex_labels must be a string with one letter per vertex")
                out["vertex_labels"] = lab
            body, dim = out, 2
        else:
            _only(body, ("base", "fields", "policy", "labels"), "switched_server")
            base = body.get("base")
            _only(base, ("vertices",), "switched_server.base")
            verts = _mat(base.get("vertices"), "switched_server.base.vertices")
            flds = body.get("fields")
            if not isinstance(flds, dict):
                raise SchemaViolation("switched_server.fields must map edge index to field lists")
            flds = {str(int(k)): _mat(v, f"switched_server.fields[{k}]") for k, v in flds.items()}
            pol = body.get("policy")
            _only(pol, ("kind", "probabilities", "floor", "seed"), "switched_server.policy")
            if pol.get("kind") not in ("cyclic", "stochastic"):
                raise SchemaViolation("policy.kind must be cyclic or stochastic")
            pol = dict(pol)
            if "probabilities" in pol:
                if not isinstance(pol["probabilities"], dict):
                    raise SchemaViolation("policy.probabilities maps a facet index or '*' to a vector")
                pol["probabilities"] = {str(k): _vec(v, "policy.probabilities")
                                        for k, v in pol["probabilities"].items()}
            if "floor" in pol:
                pol["floor"] = float(pol["floor"])
            if "seed" in pol:
                pol["seed"] = _int(pol["seed"], "policy.seed", 0)
            out = {"base": {"vertices": verts}, "fields": flds, "policy": pol}
            if "labels" in body:
                out["labels"] = {str(int(k)): str(v) for k, v in body["labels"].items()}
            body, dim = out, 2
        pert = d.get("perturbation", {}) or {}
        _only(pert, ("cuts", "packet_step"), "perturbation")
        pert = copy.deepcopy(pert)
        if "cuts" in pert:
            cuts = []
            for i, c in enumerate(pert["cuts"]):
                _only(c, ("normal", "offset"), f"perturbation.cuts[{i}]")
                n = _vec(c.get("normal"), f"perturbation.cuts[{i}].normal")
                if len(n) != dim:
                    raise SchemaViolation(f"cut normal must have {dim} entries")
                cuts.append({"normal": n, "offset": float(c.get("offset"))})
            if kind == "switched_server" and cuts:
                raise SchemaViolation("cuts are not supported on switched_server models")
            pert["cuts"] = cuts
        if "packet_step" in pert:
            pert["packet_step"] = float(pert["packet_step"])
            if not pert["packet_step"] > 0:
                raise SchemaViolation("packet_step must be positive")
        run = copy.deepcopy(d.get("run", {}) or {})
        _only(run, ("iterations", "seed", "initial", "initial2", "output", "starts", "bins",
                    "partition", "dt"), "run")
        if "iterations" in run:
            _int(run["iterations"], "run.iterations", 1)
        for k in ("seed", "starts", "bins"):
            if k in run:
                _int(run[k], f"run.{k}", 0)
        if "partition" in run and run["partition"] not in ("facets", "preimages"):
            raise SchemaViolation("run.partition must be 'facets' or 'preimages'")
        for k in ("initial", "initial2"):
            if k in run:
                s = run[k]
                _only(s, ("facet", "point", "field", "field_index"), f"run.{k}")
                s["facet"] = _int(s.get("facet"), f"run.{k}.facet", 0)
                s["point"] = _vec(s.get("point"), f"run.{k}.point")
                if len(s["point"]) != dim:
                    raise SchemaViolation(f"run.{k}.point must have {dim} entries")
                if "field" in s:
                    s["field"] = _vec(s["field"], f"run.{k}.field")
                if "field_index" in s:
                    s["field_index"] = _int(s["field_index"], f"run.{k}.field_index", 0)
        if "dt" in run:
            run["dt"] = float(run["dt"])
        name = d.get("name")
        return cls(kind, body, pert, run, name)

    def to_dict(self):
        d = {"schema_version": SCHEMA_VERSION, "model": {self.model_kind: copy.deepcopy(self.model)}}
        if self.name is not None:
            d["name"] = self.name
        if self.perturbation:
            d["perturbation"] = copy.deepcopy(self.perturbation)
        if self.run:
            d["run"] = copy.deepcopy(self.run)
        return d

    @classmethod
    def load(cls, path):
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigParse(f"cannot read {path}: {exc}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigParse(f"{path}: {exc}") from None
        return cls.from_dict(data)

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    # model construction -----------------------------------------------------
    @property
    def is_server(self):
        return self.model_kind == "switched_server"

    def cuts(self):
        return [(np.array(c["normal"]), c["offset"]) for c in self.perturbation.get("cuts", [])]

    def build(self):
        m = self.model
        if self.model_kind == "switched_arrival":
            spec = SwitchedArrivalSpec(tuple(m["rates"]),
                                       tuple(m["thresholds"]) if "thresholds" in m else None,
                                       tuple(m["upper_thresholds"]) if "upper_thresholds" in m else None)
            return build_standard_model(spec, cuts=self.cuts())
        if self.model_kind == "polygon2d":
            return build_polygon_model(m["vertices"], m["edge_fields"], cuts=self.cuts(),
                                       vertex_labels=m.get("vertex_labels"))
        P = polygon(m["base"]["vertices"])
        fields = {int(k): v for k, v in m["fields"].items()}
        pol = m["policy"]
        probs = None
        if "probabilities" in pol:
            probs = {("*" if k == "*" else int(k)): tuple(v) for k, v in pol["probabilities"].items()}
        policy = SwitchPolicy(pol["kind"], probs, pol.get("floor", 0.0), pol.get("seed", 0))
        labels = {int(k): v for k, v in m.get("labels", {}).items()}
        return build_server_model(P, fields, policy, labels=labels)


# -- output helpers -----------------------------------------------------------

def _clean(x):
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def dump_json(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def fmt(x):
    return "%.17g" % x


def csv_text(header, rows):
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for r in rows:
        buf.write(",".join(fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in r))
        buf.write("\n")
    return buf.getvalue()


class Emitter:
    """Writes the primary output to ``-o``/``run.output`` (stdout otherwise).

    A command producing a CSV also writes its JSON summary next to it as
    ``<stem>.summary.json``; on stdout the CSV alone is printed.
    """

    def __init__(self, out):
        self.out = Path(out) if out else None

    def csv(self, text, summary):
        if self.out is None:
            sys.stdout.write(text)
            return
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.out.write_text(text, encoding="utf-8")
        self.out.with_name(self.out.stem + ".summary.json").write_text(dump_json(summary),
                                                                        encoding="utf-8")

    def json(self, summary):
        text = dump_json(summary)
        if self.out is None:
            sys.stdout.write(text)
            return
        self.out.parent.mkdir(parents=True, exist_ok=True)
        self.out.write_text(text, encoding="utf-8")


class DynamicsFailure(Exception):
    """Raised by a subcommand when the dynamics make its result unobtainable."""


# -- run context ----------------------------------------------------------------

class Context:
    def __init__(self, cfg, args):
        self.cfg = cfg
        self.args = args
        self.model = cfg.build()
        run = cfg.run
        self.steps = args.steps if args.steps is not None else run.get("iterations", 1000)
        self.seed = args.seed if args.seed is not None else run.get("seed", 0)
        self.bins = args.bins if args.bins is not None else run.get("bins", 20)
        if self.steps < 1:
            raise SchemaViolation("steps must be >= 1")
        if self.bins < 1:
            raise SchemaViolation("bins must be >= 1")
        self.emit = Emitter(args.out if args.out is not None else run.get("output"))

    def rng(self, salt=0):
        return np.random.default_rng([self.seed, salt])

    def start(self, key="initial", salt=0):
        s = self.cfg.run.get(key)
        m = self.model
        P = m.polytope
        if s is None:
            rng = self.rng(salt)
            return dy.random_server_start(m, rng) if self.cfg.is_server else dy.random_start(m, rng)
        if s["facet"] not in P.facet_ids:
            raise SchemaViolation(f"run.{key}.facet {s['facet']} is not a facet")
        x = np.array(s["point"])
        if not P.contains(x) or P.on_facet(x) is None:
            raise SchemaViolation(f"run.{key}.point is not on the boundary")
        if self.cfg.is_server:
            k = s.get("field_index", 0)
            if k >= m.N:
                raise SchemaViolation(f"run.{key}.field_index must be < {m.N}")
            return dy.ServerState(s["facet"], x, k)
        try:
            return dy.start_state(m, s["facet"], x, s.get("field"))
        except dy.DynamicsError as exc:
            raise SchemaViolation(str(exc)) from None


def _orbit_rows(rec, dim, with_index=False):
    rows = []
    for k in range(len(rec)):
        r = [k + 1, int(rec.facets[k])]
        if with_index:
            r.append(int(rec.indices[k]))
        r += [float(v) for v in rec.points[k]]
        r.append(float(rec.times[k]))
        rows.append(r)
    return rows


def _orbit_header(dim, with_index=False):
    return ["step", "facet"] + (["field_index"] if with_index else []) + \
        [f"x{i + 1}" for i in range(dim)] + ["flight_time"]


def _run_orbit(ctx, s0, n):
    if ctx.cfg.is_server:
        return dy.server_orbit(ctx.model, s0, n, seed=ctx.seed)
    return dy.orbit(ctx.model, s0, n)


def _state_summary(s):
    out = {"facet": int(s.facet), "point": np.asarray(s.position)}
    if isinstance(s, dy.ServerState):
        out["field_index"] = int(s.field_index)
    else:
        out["field"] = np.asarray(s.field)
    return out


def _base_summary(ctx, command):
    return {"command": command, "model": ctx.cfg.model_kind, "name": ctx.cfg.name,
            "seed": ctx.seed, "steps_requested": ctx.steps}


# -- subcommands ----------------------------------------------------------------

def cmd_simulate(ctx):
    s0 = ctx.start()
    rec = _run_orbit(ctx, s0, ctx.steps)
    dim = ctx.model.polytope.ambient_dim
    summary = _base_summary(ctx, "simulate")
    summary.update(initial=_state_summary(s0), steps=len(rec), status=rec.status,
                   message=rec.message, sigma_hits=int(np.sum(rec.sigma)))
    ctx.emit.csv(csv_text(_orbit_header(dim), _orbit_rows(rec, dim)), summary)
    if rec.status != "ok":
        raise DynamicsFailure(f"orbit stopped after {len(rec)} of {ctx.steps} steps: {rec.message}")


def cmd_return_map(ctx):
    """Tabulate T on sample points of every facet (uniform midpoints for 1-D facets)."""
    m = ctx.model
    if ctx.cfg.is_server:
        raise SchemaViolation("return-map needs a single-field model")
    P = m.polytope
    k = P.dim - 1
    rng = ctx.rng()
    header = ["facet"] + [f"y{j + 1}" for j in range(k)] + ["target"] + \
        [f"z{j + 1}" for j in range(k)] + ["flight_time", "status"]
    rows, bad = [], 0
    for f in P.facet_ids:
        if m.is_cut(f):
            continue
        if k == 1:
            L = P.facet_measure(f)
            Y = ((np.arange(ctx.bins) + 0.5) / ctx.bins * L)[:, None]
            X = P.from_chart(f, Y)
        else:
            X = dy.sample_on_facet(P, f, rng, ctx.bins)
            Y = P.to_chart(f, X)
        for y, x in zip(Y, X):
            s = dy.start_state(m, f, x)
            try:
                t, ft = dy.flight(m, s)
                z = P.to_chart(t.facet, t.position)
                rows.append([f] + [float(v) for v in y] + [t.facet] + [float(v) for v in z] +
                            [float(ft), "ok"])
            except dy.DynamicsError:
                bad += 1
                rows.append([f] + [float(v) for v in y] + [-1] + [float("nan")] * k +
                            [float("nan"), "degenerate_vertex"])
    summary = _base_summary(ctx, "return-map")
    summary.update(samples=len(rows), degenerate=bad, bins=ctx.bins)
    ctx.emit.csv(csv_text(header, rows), summary)


def cmd_lyapunov(ctx):
    if ctx.cfg.is_server:
        raise SchemaViolation("lyapunov needs a single-field model")
    s0 = ctx.start()
    rep = an.lyapunov_spectrum(ctx.model, s0, ctx.steps)
    if rep.steps < 100:
        raise DynamicsFailure(f"orbit stopped after {rep.steps} steps ({rep.status})")
    summary = _base_summary(ctx, "lyapunov")
    summary.update(initial=_state_summary(s0), exponent=rep.exponent, exponents=rep.exponents,
                   steps=rep.steps, status=rep.status, tail_variance=rep.tail_variance,
                   stderr=rep.stderr, halves=[list(h) for h in rep.halves],
                   single_step_sv={"min": rep.single_sv[0], "max": rep.single_sv[1]},
                   k_step_sv={str(k): {"min": v[0], "max": v[1]} for k, v in rep.kstep_sv.items()},
                   classification=an.classify_exponent(rep.exponents))
    ctx.emit.json(summary)


def cmd_chaos_cert(ctx):
    if ctx.cfg.is_server:
        raise SchemaViolation("chaos-cert needs a single-field model")
    try:
        rep = an.chaos_certificate(ctx.model)
    except ModelError as exc:
        raise SchemaViolation(str(exc)) from None
    summary = _base_summary(ctx, "chaos-cert")
    summary.update(passes=rep.passes, failing=rep.failing,
                   vertices=[{"vertex": v.vertex, "label": v.label, "passes": v.passes,
                              "point": v.point, "margin": v.margin} for v in rep.vertices])
    ctx.emit.json(summary)


def _partition(ctx):
    kind = ctx.cfg.run.get("partition", "facets")
    if kind == "preimages":
        return an.preimage_partition(ctx.model)
    return an.facet_partition(ctx.model)


def cmd_markov_verify(ctx):
    if ctx.cfg.is_server:
        raise SchemaViolation("markov-verify needs a single-field model")
    if any(ctx.model.is_cut(f) for f in ctx.model.polytope.facet_ids):
        raise SchemaViolation("markov-verify needs a model without cuts")
    part = _partition(ctx)
    rep = an.verify_strong_markov(ctx.model, part, rng=ctx.rng())
    els = []
    for el in part:
        holds, images = rep.elements[el.id]
        els.append({"id": el.id, "facet": el.facet, "label": el.label, "interval": el.interval,
                    "holds": holds,
                    "images": [{"target": im.target, "interval": im.interval, "det": im.det,
                                "covered": im.covered, "exact": im.exact} for im in images]})
    summary = _base_summary(ctx, "markov-verify")
    summary.update(holds=rep.holds, partition=ctx.cfg.run.get("partition", "facets"),
                   elements=els)
    ctx.emit.json(summary)


def cmd_components(ctx):
    if ctx.cfg.is_server:
        raise SchemaViolation("components needs a single-field model")
    part = _partition(ctx)
    labels = {el.id: el.label for el in part}
    rep = an.transitivity_components(ctx.model, part, steps=ctx.steps, seed=ctx.seed)
    comps = []
    for i, c in enumerate(rep.components):
        comps.append({"elements": c, "labels": [labels[e] for e in c], "closed": i in rep.closed,
                      "classification": rep.classification.get(i),
                      "exponents": rep.exponents.get(i)})
    summary = _base_summary(ctx, "components")
    summary.update(components=comps, closed=len(rep.closed),
                   edges=sorted([list(e) for e in rep.graph.edges]))
    ctx.emit.json(summary)


def cmd_orbits(ctx):
    """Ensemble of orbits from random starts, each searched for a periodic attractor."""
    if ctx.cfg.is_server:
        raise SchemaViolation("orbits needs a single-field model")
    m = ctx.model
    count = ctx.cfg.run.get("starts", 20)
    rng = ctx.rng()
    starts = [dy.random_start(m, rng) for _ in range(count)]
    if "initial" in ctx.cfg.run:
        starts = [ctx.start()] + starts

    def one(s):
        rec = dy.orbit(m, s, ctx.steps)
        rep = an.detect_periodic_attractor(rec) if len(rec) >= 16 else an.PeriodicReport(False)
        return rec, rep

    results = an.ensemble(one, starts)
    out = []
    for s, (rec, rep) in zip(starts, results):
        item = {"initial": _state_summary(s), "steps": len(rec), "status": rec.status,
                "found": rep.found}
        if rep.found:
            item.update(period=rep.period, multipliers=rep.multipliers,
                        attracting=rep.attracting, fixed_point=rep.fixed_point,
                        cycle_facets=[int(st.facet) for st in rep.states],
                        cycle_labels=[m.label(st.facet) for st in rep.states])
        out.append(item)
    summary = _base_summary(ctx, "orbits")
    summary.update(starts=len(starts), orbits=out,
                   attracting=sum(1 for o in out if o.get("attracting")))
    ctx.emit.json(summary)


def cmd_measure(ctx):
    s0 = ctx.start()
    rec = _run_orbit(ctx, s0, ctx.steps)
    if len(rec) == 0:
        raise DynamicsFailure(f"orbit stopped immediately: {rec.message}")
    h = an.empirical_measure(rec, bins=ctx.bins, model=ctx.model)
    P = ctx.model.polytope
    k = P.dim - 1
    header = ["facet", "bin"] + [f"lo{j + 1}" for j in range(k)] + \
        [f"hi{j + 1}" for j in range(k)] + ["count", "mass"]
    rows = []
    for f in h.facets:
        E = h.edges[f]
        for idx in np.ndindex(*h.counts[f].shape):
            c = int(h.counts[f][idx])
            rows.append([f, "-".join(str(i) for i in idx)] +
                        [float(E[j][idx[j]]) for j in range(k)] +
                        [float(E[j][idx[j] + 1]) for j in range(k)] + [c, float(c / h.total)])
    summary = _base_summary(ctx, "measure")
    summary.update(initial=_state_summary(s0), total=h.total, status=rec.status,
                   bins=ctx.bins, facet_mass={str(f): v for f, v in h.facet_mass().items()})
    if k == 1 and not ctx.cfg.is_server:
        summary["l1_to_uniform"] = an.histogram_l1(h, an.uniform_histogram(ctx.model, ctx.bins))
    ctx.emit.csv(csv_text(header, rows), summary)


def cmd_discretize(ctx):
    if ctx.cfg.is_server:
        raise SchemaViolation("discretize needs a single-field model")
    eps = ctx.cfg.perturbation.get("packet_step")
    if eps is None:
        raise SchemaViolation("discretize needs perturbation.packet_step")
    s = ctx.cfg.run.get("initial")
    if s is None:
        s0 = dy.random_start(ctx.model, ctx.rng())
        x0, f0 = s0.position, s0.facet
    else:
        x0, f0 = np.array(s["point"]), s["facet"]
    d = dy.discrete_orbit(ctx.model, PacketScheme(eps), x0, ctx.steps, facet=f0, grid=ctx.bins)
    dim = ctx.model.polytope.ambient_dim
    header = ["step", "facet"] + [f"x{i + 1}" for i in range(dim)] + ["collision"]
    rows = [[k, int(d.active[k])] + [float(v) for v in d.positions[k]] + [int(d.collisions[k])]
            for k in range(len(d.positions))]
    summary = _base_summary(ctx, "discretize")
    summary.update(packet_step=eps, periodic=d.periodic, period=d.period, transient=d.transient,
                   coverage=d.coverage, grid=d.grid, steps=len(d.positions) - 1,
                   collisions=int(np.sum(d.collisions)))
    ctx.emit.csv(csv_text(header, rows), summary)


def cmd_server(ctx):
    if not ctx.cfg.is_server:
        raise SchemaViolation("server needs a switched_server model")
    s0 = ctx.start()
    rec = dy.server_orbit(ctx.model, s0, ctx.steps, seed=ctx.seed)
    dim = ctx.model.polytope.ambient_dim
    summary = _base_summary(ctx, "server")
    summary.update(initial=_state_summary(s0), steps=len(rec), status=rec.status,
                   policy=ctx.model.policy.kind)
    if ctx.model.policy.kind == "cyclic":
        key = an.attractor_key(rec)
        summary["limit_set"] = sorted(list(p) for p in key) if key else None
    ctx.emit.csv(csv_text(_orbit_header(dim, True), _orbit_rows(rec, dim, True)), summary)
    # a deterministic chain may stop on the vertex it converges to; that is
    # its limit set, not a failure
    if rec.status == "error" or len(rec) == 0:
        raise DynamicsFailure(f"orbit stopped after {len(rec)} steps: {rec.message}")


def cmd_coupling(ctx):
    if not ctx.cfg.is_server:
        raise SchemaViolation("coupling needs a switched_server model")
    s0 = ctx.start("initial", 0)
    s1 = ctx.start("initial2", 1)
    d = an.coupling_distance(ctx.model, s0, s1, ctx.steps, seed=ctx.seed)
    C, r = an.fit_rate(d)
    below = np.flatnonzero(d < 1e-8)
    summary = _base_summary(ctx, "coupling")
    summary.update(initial=_state_summary(s0), initial2=_state_summary(s1), steps=len(d),
                   fit_C=C, fit_rate=r, final_distance=float(d[-1]) if len(d) else None,
                   first_below_1e8=int(below[0]) + 1 if len(below) else None)
    ctx.emit.csv(csv_text(["step", "distance"], [[k + 1, float(v)] for k, v in enumerate(d)]),
                 summary)
    if len(d) < ctx.steps:
        raise DynamicsFailure(f"a coupled chain stopped after {len(d)} steps")


HANDLERS = {
    "simulate": cmd_simulate, "return-map": cmd_return_map, "lyapunov": cmd_lyapunov,
    "chaos-cert": cmd_chaos_cert, "markov-verify": cmd_markov_verify,
    "components": cmd_components, "orbits": cmd_orbits, "measure": cmd_measure,
    "discretize": cmd_discretize, "server": cmd_server, "coupling": cmd_coupling,
}


def build_parser():
    p = argparse.ArgumentParser(prog="psb", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s 0.1.0 ({BACKEND} kernels)")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "simulate": "orbit of the return map as CSV",
        "return-map": "tabulate the return map on sample points of each facet",
        "lyapunov": "Lyapunov spectrum and piece singular values (JSON)",
        "chaos-cert": "vertex-line chaoticity certificate (JSON)",
        "markov-verify": "strong Markov check of a facet or preimage partition (JSON)",
        "components": "transitivity components and their Lyapunov type (JSON)",
        "orbits": "periodic-attractor search over an ensemble of starts (JSON)",
        "measure": "occupation histogram of boundary points (CSV)",
        "discretize": "packet (space-discretised) dynamics (CSV)",
        "server": "switched-server orbit with field indices (CSV)",
        "coupling": "distance between two chains driven by the same draws (CSV)",
    }
    for name in COMMANDS:
        sp = sub.add_parser(name, help=helps[name])
        sp.add_argument("-c", "--config", required=True, help="JSON config path")
        sp.add_argument("-n", "--steps", type=int, default=None, help="iterations (overrides run.iterations)")
        sp.add_argument("--seed", type=int, default=None, help="RNG seed (overrides run.seed)")
        sp.add_argument("-o", "--out", default=None, help="output path (default: run.output or stdout)")
        sp.add_argument("--bins", type=int, default=None, help="bins per facet / samples per facet")
    return p


def run_command(argv):
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        ctx = Context(cfg, args)
    except (ConfigError, ModelError, GeometryError, ValueError, TypeError) as exc:
        print(f"psb: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        HANDLERS[args.command](ctx)
    except (ConfigError, an.OrbitTooShort) as exc:
        print(f"psb: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DynamicsFailure, dy.DynamicsError, GeometryError, an.AnalysisError, ModelError) as exc:
        print(f"psb: dynamical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DYNAMICS
    return EXIT_OK


def main(argv=None):
    try:
        return run_command(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:  # argparse usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
