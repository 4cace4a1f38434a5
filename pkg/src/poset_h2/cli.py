"""Command line front end: ``synth``, ``verify`` and ``report``.

Exit codes: 0 success, 1 file or parse error, 2 plant validation failure
(the failing invariant is named on stderr), 3 one or more verdicts failed.
Log verbosity is controlled by the ``POSET_H2_LOG`` environment variable
(``error``, ``info`` or ``debug``).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .errors import DimensionMismatch, PlantValidationError, PosetH2Error
from .poset import BlockPartition, build_poset, downstream, sigma
from .statespace import StateSpaceRealization
from .synthesis import PlantData, synthesize, validate_plant
from .verify import (
    GainRecord,
    NormReport,
    StoredResult,
    Tolerances,
    Verdict,
    run_all,
)

log = logging.getLogger("poset_h2.cli")

_LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}


def _configure_logging():
    level = os.environ.get("POSET_H2_LOG", "error").strip().lower()
    logging.basicConfig(level=_LOG_LEVELS.get(level, logging.ERROR))


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _parse_plant_file(data: dict):
    poset = build_poset(
        data["poset"]["elements"], data["poset"].get("hasse_edges", [])
    )
    part_raw = data["partition"]
    listed = [str(e) for e in data["poset"]["elements"]]
    perm = [listed.index(e) for e in poset.elements]
    partition = BlockPartition(
        state_dims=tuple(part_raw["state_dims"][k] for k in perm),
        input_dims=tuple(part_raw["input_dims"][k] for k in perm),
        output_dim=int(part_raw["output_dim"]),
        disturbance_dims=tuple(
            part_raw["disturbance_dims"][k] for k in perm
        ) if "disturbance_dims" in part_raw else (),
    )

    def matrix(name):
        return np.array(data[name], dtype=float)

    A, B, C, D, F = (matrix(k) for k in "ABCDF")
    if perm != list(range(len(listed))):
        # The listed element order was not a linear extension; permute the
        # matrix blocks into the internal order.
        log.info("reordering plant blocks into linear-extension order")
        sd = [int(d) for d in part_raw["state_dims"]]
        idm = [int(d) for d in part_raw["input_dims"]]
        dd = [int(d) for d in part_raw.get("disturbance_dims", sd)]
        s_idx = _permuted_indices(sd, perm)
        i_idx = _permuted_indices(idm, perm)
        d_idx = _permuted_indices(dd, perm)
        A = A[np.ix_(s_idx, s_idx)]
        B = B[np.ix_(s_idx, i_idx)]
        C = C[:, s_idx]
        D = D[:, i_idx]
        F = F[np.ix_(s_idx, d_idx)]
    return poset, partition, A, B, C, D, F


def _permuted_indices(dims, perm):
    offsets = np.concatenate(([0], np.cumsum(dims)))
    idx = []
    for k in perm:
        idx.extend(range(offsets[k], offsets[k + 1]))
    return idx


def _load_plant(path: str):
    data = _load_json(path)
    poset, partition, A, B, C, D, F = _parse_plant_file(data)
    return validate_plant(poset, partition, A, B, C, D, F), data


def _verdict_lines(verdicts) -> list[str]:
    lines = []
    for v in verdicts:
        status = "PASS" if v.passed else "FAIL"
        measured = "inf" if not math.isfinite(v.measured) else f"{v.measured:.6g}"
        lines.append(
            f"  {status}  {v.check_name:32s} measured={measured} "
            f"tol={v.tolerance:.6g}"
        )
    return lines


def _result_payload(plant, result, verdicts, norms, config) -> dict:
    gains = {
        label: {
            "L": sol.L.tolist(),
            "X": sol.X.tolist(),
            "residual": sol.residual,
        }
        for label, sol in result.gains.items()
    }
    part = plant.partition
    return {
        "tool": "poset-h2",
        "version": __version__,
        "config": config,
        "poset": {
            "elements": list(plant.poset.elements),
            "hasse_edges": [list(e) for e in plant.poset.hasse_edges],
        },
        "partition": {
            "state_dims": list(part.state_dims),
            "input_dims": list(part.input_dims),
            "output_dim": part.output_dim,
            "disturbance_dims": list(part.disturbance_dims),
        },
        "controller": result.K_star.to_dict(),
        "phi": result.Phi.to_dict(),
        "gamma": result.Gamma.to_dict(),
        "k_phi": result.K_Phi.to_dict(),
        "q_star": result.Q_star.to_dict(),
        "gains": gains,
        "controller_state_labels": list(result.controller_state_labels),
        "degree": result.K_star.nstates,
        "degree_bound": result.degree_bound,
        "sigma": sigma(plant.poset),
        "sigma_times_nmax": result.sigma_times_nmax,
        "norms": norms.to_dict(),
        "verdicts": [v.to_dict() for v in verdicts],
    }


def cmd_synth(args) -> int:
    try:
        plant, plant_raw = _load_plant(args.plant)
    except PlantValidationError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except PosetH2Error as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(
            f"parse error in {args.plant}: {exc.msg} "
            f"(line {exc.lineno}, column {exc.colno})",
            file=sys.stderr,
        )
        return 1
    except (OSError, KeyError, TypeError, ValueError, IndexError) as exc:
        print(f"cannot read plant file {args.plant}: {exc}", file=sys.stderr)
        return 1

    tolerances = Tolerances(
        pattern_atol=args.atol, stability_margin=args.margin
    )
    try:
        result = synthesize(plant, parallel=not args.no_parallel)
        verdicts, norms = run_all(
            plant, result, tolerances=tolerances, freq_count=args.freq_samples
        )
    except PosetH2Error as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2

    config = {
        "atol": args.atol,
        "freq_samples": args.freq_samples,
        "parallel": not args.no_parallel,
        "margin": args.margin,
    }
    payload = _result_payload(plant, result, verdicts, norms, config)
    out = args.output or "result.json"
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")

    failed = [v for v in verdicts if not v.passed]
    print(f"wrote {out}: controller degree {result.K_star.nstates}, "
          f"norms ({_fmt(norms.h_open)}, {_fmt(norms.h_centralized)}, "
          f"{_fmt(norms.h_decentralized)})")
    if failed:
        print("failed verdicts:", file=sys.stderr)
        for line in _verdict_lines(failed):
            print(line, file=sys.stderr)
        return 3
    return 0


def cmd_verify(args) -> int:
    try:
        plant, _ = _load_plant(args.plant)
    except PlantValidationError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except PosetH2Error as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(
            f"parse error in {args.plant}: {exc.msg} "
            f"(line {exc.lineno}, column {exc.colno})",
            file=sys.stderr,
        )
        return 1
    except (OSError, KeyError, TypeError, ValueError, IndexError) as exc:
        print(f"cannot read plant file {args.plant}: {exc}", file=sys.stderr)
        return 1

    try:
        data = _load_json(args.result)
        stored = StoredResult(
            K_star=StateSpaceRealization.from_dict(data["controller"]),
            Phi=StateSpaceRealization.from_dict(data["phi"]),
            Gamma=StateSpaceRealization.from_dict(data["gamma"]),
            K_Phi=StateSpaceRealization.from_dict(data["k_phi"]),
            Q_star=StateSpaceRealization.from_dict(data["q_star"]),
            gains={
                label: GainRecord(
                    L=np.array(rec["L"], dtype=float),
                    X=np.array(rec["X"], dtype=float),
                    residual=float(rec["residual"]),
                )
                for label, rec in data.get("gains", {}).items()
            } or None,
        )
    except json.JSONDecodeError as exc:
        print(
            f"parse error in {args.result}: {exc.msg} "
            f"(line {exc.lineno}, column {exc.colno})",
            file=sys.stderr,
        )
        return 1
    except (OSError, KeyError, TypeError, ValueError, IndexError, PosetH2Error) as exc:
        print(f"cannot read result file {args.result}: {exc}", file=sys.stderr)
        return 1

    tolerances = Tolerances(
        pattern_atol=args.atol, stability_margin=args.margin
    )
    try:
        verdicts, norms = run_all(
            plant, stored, tolerances=tolerances, freq_count=args.freq_samples
        )
    except (DimensionMismatch, PosetH2Error) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    print(f"norms: h_open={_fmt(norms.h_open)} "
          f"h_centralized={_fmt(norms.h_centralized)} "
          f"h_decentralized={_fmt(norms.h_decentralized)}")
    print("verdicts:")
    for line in _verdict_lines(verdicts):
        print(line)
    return 0 if all(v.passed for v in verdicts) else 3


def _fmt(x: float) -> str:
    if not math.isfinite(x):
        return "inf"
    return f"{x:.6g}"


def _format_matrix(rows, indent="    ") -> list[str]:
    out = []
    for row in rows:
        out.append(indent + "[" + ", ".join(_fmt(v) for v in row) + "]")
    return out


def render_report(data: dict) -> str:
    """Render a result payload as a deterministic plain-text report."""
    poset = build_poset(
        data["poset"]["elements"], data["poset"].get("hasse_edges", [])
    )
    norms = NormReport.from_dict(data["norms"])
    verdicts = [Verdict.from_dict(v) for v in data["verdicts"]]
    lines = []
    lines.append(f"poset-h2 report (tool version {data.get('version', '?')})")
    lines.append("")
    lines.append(f"poset: {len(poset)} element(s)")
    hasse = ", ".join(f"{a} -> {b}" for a, b in poset.hasse_edges) or "(none)"
    lines.append(f"  hasse edges: {hasse}")
    lines.append(f"  linear extension: {', '.join(poset.elements)}")
    lines.append(f"  sigma: {data['sigma']}")
    lines.append("")
    lines.append("per-element gains:")
    for label in poset.elements:
        rec = data["gains"][label]
        down = ", ".join(downstream(poset, label))
        lines.append(f"  element {label} (downstream set {{{down}}}):")
        lines.extend(_format_matrix(rec["L"]))
    lines.append("")
    degree = data["degree"]
    lines.append(
        f"controller degree: {degree} "
        f"(strict-downstream total {data['degree_bound']}, "
        f"poset bound {data['sigma_times_nmax']})"
    )
    labels = data.get("controller_state_labels", [])
    lines.append(
        "controller states: " + (", ".join(labels) if labels else "(static)")
    )
    lines.append("")
    lines.append("norms:")
    lines.append(f"  h_open:          {_fmt(norms.h_open)}")
    lines.append(f"  h_centralized:   {_fmt(norms.h_centralized)}")
    lines.append(f"  h_decentralized: {_fmt(norms.h_decentralized)}")
    gap = norms.h_decentralized - norms.h_centralized
    gap_text = "0" if abs(gap) < 1e-8 else _fmt(gap)
    lines.append(f"  decentralization gap: {gap_text}")
    lines.append("")
    lines.append("local control laws (one per element, aggregated):")
    for label in poset.elements:
        down = downstream(poset, label)
        targets = ", ".join(f"u[{i}]" for i in down)
        lines.append(
            f"  element {label}: K(down {label}) drives {{{targets}}} from the"
            f" differential state improvement at {label}"
        )
    if len(poset) == 2 and len(poset.hasse_edges) == 1:
        a, b = poset.elements
        lines.append("")
        lines.append("two-element chain closed form (K = K(down {}), J = K(down {})):".format(a, b))
        lines.append(
            f"  u[{a}] = -(K[{a},{a}] + K[{a},{b}] Phi[{b}<-{a}]) x[{a}]"
        )
        lines.append(
            f"  u[{b}] = -(K[{b},{a}] + K[{b},{b}] Phi[{b}<-{a}]) x[{a}]"
            f" - J (x[{b}] - Phi[{b}<-{a}] x[{a}])"
        )
    lines.append("")
    lines.append("verdicts:")
    lines.extend(_verdict_lines(verdicts))
    lines.append("")
    return "\n".join(lines)


def cmd_report(args) -> int:
    try:
        data = _load_json(args.result)
        text = render_report(data)
    except json.JSONDecodeError as exc:
        print(
            f"parse error in {args.result}: {exc.msg} "
            f"(line {exc.lineno}, column {exc.colno})",
            file=sys.stderr,
        )
        return 1
    except (OSError, KeyError, TypeError, ValueError, IndexError, PosetH2Error) as exc:
        print(f"cannot read result file {args.result}: {exc}", file=sys.stderr)
        return 1
    print(text, end="")
    return 0


def _add_common_flags(parser: argparse.ArgumentParser):
    parser.add_argument(
        "--atol", type=float, default=1e-8,
        help="absolute tolerance for sampled sparsity checks",
    )
    parser.add_argument(
        "--freq-samples", type=int, default=20,
        help="number of frequency points for sampled checks",
    )
    parser.add_argument(
        "--no-parallel", action="store_true",
        help="solve the per-element subproblems sequentially",
    )
    parser.add_argument(
        "--margin", type=float, default=0.0,
        help="required stability margin for eigenvalue checks",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="poset-h2",
        description="H2-optimal decentralized state feedback for poset-causal plants",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="synthesize a controller from a plant file")
    p_synth.add_argument("plant", help="plant JSON file")
    p_synth.add_argument("-o", "--output", help="result JSON file (default result.json)")
    _add_common_flags(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_verify = sub.add_parser("verify", help="re-check a stored result against a plant")
    p_verify.add_argument("plant", help="plant JSON file")
    p_verify.add_argument("result", help="result JSON file")
    _add_common_flags(p_verify)
    p_verify.set_defaults(func=cmd_verify)

    p_report = sub.add_parser("report", help="render a stored result as text")
    p_report.add_argument("result", help="result JSON file")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
