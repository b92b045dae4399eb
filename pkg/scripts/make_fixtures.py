"""Regenerate the JSON fixture configs in ``configs/``.

The heptagon is re-solved from its parallelism and length constraints and
the doubly cut triangle is rebuilt from the drawing's coordinates, so the
files can be reproduced from the library alone::

    python3 scripts/make_fixtures.py [outdir]
"""
import sys
from pathlib import Path

import numpy as np

from pseudobilliard import fixtures as fx
from pseudobilliard.cli import RunConfig


def arrival(name, N, thresholds=None, cuts=(), run=None):
    model = {"rates": [1.0 / N] * N}
    if thresholds is not None:
        model["thresholds"] = list(thresholds)
    d = {"schema_version": 1, "name": name, "model": {"switched_arrival": model},
         "run": run or {"iterations": 1000, "seed": 0}}
    if cuts:
        d["perturbation"] = {"cuts": [{"normal": list(map(float, n)), "offset": float(b)}
                                      for n, b in cuts]}
    return d


def poly(name, model, run=None, cuts=(), packet_step=None):
    V = model.base_vertices
    fields = [model.base_fields[i] for i in range(len(V))]
    body = {"vertices": np.asarray(V).tolist(), "edge_fields": np.asarray(fields).tolist()}
    if model.vertex_names:
        body["vertex_labels"] = "".join(model.vertex_names)
    d = {"schema_version": 1, "name": name, "model": {"polygon2d": body},
         "run": run or {"iterations": 1000, "seed": 0}}
    pert = {}
    if cuts:
        pert["cuts"] = [{"normal": np.asarray(n, float).tolist(), "offset": float(b)} for n, b in cuts]
    if packet_step is not None:
        pert["packet_step"] = packet_step
    if pert:
        d["perturbation"] = pert
    return d


def server(name, kind):
    fields = fx.server_triangle_fields()
    pol = {"kind": kind, "seed": 7}
    if kind == "stochastic":
        pol.update(probabilities={"*": [0.5, 0.5]}, floor=0.1)
    return {"schema_version": 1, "name": name,
            "model": {"switched_server": {
                "base": {"vertices": fx.TRIANGLE.tolist()},
                "fields": {str(k): np.asarray(v).tolist() for k, v in fields.items()},
                "policy": pol, "labels": {"0": "AB", "1": "BC", "2": "CA"}}},
            "run": {"iterations": 1000, "seed": 7,
                    "initial": {"facet": 0, "point": [0.3, 0.0], "field_index": 0},
                    "initial2": {"facet": 0, "point": [0.8, 0.0], "field_index": 0}}}


def configs():
    out = {
        "n3": arrival("n3", 3, run={"iterations": 1000, "seed": 0,
                                     "initial": {"facet": 0, "point": [0.0, 0.3, 0.7]}}),
        "n4": arrival("n4", 4, run={"iterations": 1000, "seed": 0,
                                     "initial": {"facet": 0, "point": [0.0, 0.1234, 0.3579, 0.5187]}}),
        "threshold_n3": arrival("threshold_n3", 3, thresholds=[0.1, 0.0, 0.0]),
        "corner_cut": arrival("corner_cut", 3, cuts=[((1.0, 0.0, 0.0), 0.9)]),
        "contraction_triangle": poly("contraction_triangle", fx.contraction_triangle()),
        "perpendicular_triangle": poly("perpendicular_triangle", fx.perpendicular_triangle()),
        "square": poly("square", fx.unit_square(), packet_step=0.25,
                       run={"iterations": 1000, "seed": 0,
                            "initial": {"facet": 0, "point": [0.3, 0.0]}}),
        "heptagon": poly("heptagon", fx.heptagon(), run={"iterations": 4000, "seed": 0}),
        "fig5": poly("fig5", fx.fig5_model(), cuts=fx.FIG5_CUTS,
                     run={"iterations": 1000, "seed": 0, "starts": 20}),
        "server_cyclic": server("server_cyclic", "cyclic"),
        "server_stochastic": server("server_stochastic", "stochastic"),
    }
    for name, d in out.items():
        cfg = RunConfig.from_dict(d)
        cfg.build()  # every fixture must describe a valid model
        out[name] = cfg
    return out


def main(outdir="configs"):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    for name, cfg in configs().items():
        (outdir / f"{name}.json").write_text(cfg.dumps(), encoding="utf-8")
        print(f"wrote {outdir / (name + '.json')}")


if __name__ == "__main__":
    main(*sys.argv[1:])
