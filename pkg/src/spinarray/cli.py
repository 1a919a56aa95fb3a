"""Command-line front end.

One scenario document (YAML) drives every subcommand; see scenario.py for
the schema.  All randomness is seeded through the document (or --seed), so
every subcommand is deterministic: re-running a scenario produces
byte-identical output files.

Exit codes: 0 success, 2 scenario parse/validation error, 3 infeasible
plan, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import bounds, moments, oat, simulate
from .errors import InfeasiblePlanError, NumericalFailure, ScenarioError
from .scenario import (
    build_partition,
    build_resource,
    build_spec,
    load_document,
    output_options,
)

# Mixing angles matched to splitting ratios N1/N in
# {0.81, 0.71, 0.64, 0.52, 0.40}, each with both sign settings.
DEFAULT_SCAN_RATIOS = (0.81, 0.71, 0.64, 0.52, 0.40)


def default_scan_angles() -> list:
    angles = []
    for r in DEFAULT_SCAN_RATIOS:
        alpha = float(np.arctan((1 - r) / r))
        angles.extend([alpha, -alpha])
    return angles


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def _json_default(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return str(value)


def _write_rows(header, rows, fmt, path, quiet):
    """Emit rows as CSV (header first) or JSON records."""
    if fmt == "json":
        records = [dict(zip(header, row)) for row in rows]
        payload = json.dumps(records, indent=2, default=_json_default) + "\n"
        if path is None:
            sys.stdout.write(payload)
        else:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(payload)
    else:
        target = open(path, "w", encoding="utf-8", newline="") if path else sys.stdout
        try:
            writer = csv.writer(target)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        finally:
            if path:
                target.close()
    if path and not quiet:
        print(f"wrote {path}")


def _resolve_output(args, doc):
    opts = output_options(doc)
    fmt = args.format or opts["format"]
    path = args.out or opts["path"]
    return fmt, path, opts


def cmd_gain_table(args) -> int:
    """Closed-form gains for the scenario's resource and sensor count."""
    doc = load_document(args.scenario)
    resource = build_resource(doc)
    partition = build_partition(doc, resource)
    m = partition.m_sensors
    rows = [("single_combination", resource.xi2, moments.to_db(resource.xi2))]
    if m >= 2:
        for name, gain in (
            ("local_only", moments.local_gain(resource, m)),
            ("joint", moments.joint_gain(resource, m)),
            ("anti_squeezed", moments.antisqueezed_gain(resource)),
        ):
            rows.append((name, gain, moments.to_db(gain)))
    rows.append(("css_baseline", 1.0, 0.0))
    fmt, path, _ = _resolve_output(args, doc)
    _write_rows(("formula", "gain", "gain_db"), rows, fmt, path, args.quiet)
    return 0


def cmd_simulate(args) -> int:
    """Run the full protocol once and write the estimation report."""
    doc = load_document(args.scenario)
    spec = build_spec(doc, seed=args.seed, mu=args.mu)
    fmt, path, opts = _resolve_output(args, doc)
    report = simulate.run_protocol(spec)
    header = ("parameter", "estimate", "variance", "sql", "gain_db", "se_gain_db")
    if fmt == "json" and path:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2)
            fh.write("\n")
        if not args.quiet:
            print(f"wrote {path}")
    else:
        _write_rows(header, report.to_rows(), fmt, path, args.quiet)

    shots_path = args.shots_out or opts["shots_path"]
    if shots_path:
        shots = simulate.sample_shots(spec)
        m = spec.m_sensors
        shot_header = ("config_index", "shot_index") + tuple(
            f"S_{k + 1}^z" for k in range(m)
        )
        _write_rows(shot_header, shots.to_rows(), "csv", shots_path, args.quiet)

    matrix_path = args.gain_matrix_out or opts["gain_matrix_path"]
    if matrix_path:
        gain_db, combos = simulate.configuration_gain_matrix(spec)
        header = ("configuration",) + tuple(
            "combo_" + cfg.label() for cfg, _ in spec.plan.entries
        )
        rows = [
            (cfg.label(), *gain_db[l]) for l, (cfg, _) in enumerate(spec.plan.entries)
        ]
        _write_rows(header, rows, "csv", matrix_path, args.quiet)
    return 0


def cmd_combo_scan(args) -> int:
    """Mixing-angle sweep with per-angle optimal allocation (M = 2)."""
    doc = load_document(args.scenario)
    spec = build_spec(doc, seed=args.seed, mu=args.mu)
    if args.angles:
        angles = [np.radians(float(a)) for a in args.angles.split(",")]
    else:
        angles = default_scan_angles()
    rows = []
    for row in simulate.sweep_mixing_angle(spec, angles):
        rows.append(
            (
                row["alpha_deg"],
                "/".join(str(n) for n in row["atom_counts"]),
                "".join("+" if s >= 0 else "-" for s in row["signs"]),
                row["variance"],
                row["sql"],
                row["gain"],
                row["gain_db"],
                row["theory_db"],
            )
        )
    fmt, path, _ = _resolve_output(args, doc)
    header = ("alpha_deg", "atom_counts", "signs", "variance", "sql", "gain", "gain_db", "theory_db")
    _write_rows(header, rows, fmt, path, args.quiet)
    return 0


def _oracle_partitions(n: int) -> list:
    candidates = [(n // 2, n - n // 2), (2, n - 2)]
    if n >= 6:
        k = n // 3
        candidates.append((k, k, n - 2 * k))
    seen, out = set(), []
    for counts in candidates:
        if counts not in seen:
            seen.add(counts)
            out.append(counts)
    return out


def oracle_check_rows(max_n: int, twist_phases=(0.0, 0.1, 0.25, 0.5)) -> list:
    """Cross-check analytic sensor moments against the 2^N brute force.

    One row per (check, N, chi_t, partition) with the maximal absolute
    deviation; the final xi2_dip row records the minimal xi^2 over the
    twisting scan for N = 100 (passes when squeezing appears and
    oversqueezing lifts xi^2 back above 1).
    """
    if max_n > oat.BRUTE_FORCE_MAX_ATOMS:
        raise ScenarioError(
            f"max_n is limited to {oat.BRUTE_FORCE_MAX_ATOMS}, got {max_n}"
        )
    rows = []
    for n in range(4, max_n + 1):
        for chi_t in twist_phases:
            state = oat.evolve_oat(n, chi_t)
            phi = oat.optimal_rotation(state) if chi_t else 0.0
            if phi:
                state = oat.rotate_x(state, phi)
            mom = oat.collective_moments(state)
            for counts in _oracle_partitions(n):
                brute = oat.brute_force_sensor_moments(n, chi_t, phi, counts)
                label = "/".join(str(c) for c in counts)

                global_dev = max(
                    abs(brute.global_var_sz - mom.var_sz),
                    abs(brute.global_var_sy - mom.var_sy),
                    abs(brute.global_mean_sx - mom.mean_sx),
                )
                # feed the closed forms with the brute-force global moments:
                # what is tested here is the partition structure, and the
                # chi_t = 0 rows then come out exactly zero.
                resource = moments.SqueezedResource(
                    n_atoms=n,
                    var_sz=brute.global_var_sz,
                    mean_sx=brute.global_mean_sx,
                    var_sy=brute.global_var_sy,
                )
                partition = moments.SensorPartition(
                    atom_counts=counts, contrasts=(resource.contrast,) * len(counts)
                )
                model = moments.partition_moments(resource, partition)
                gamma_dev = float(np.max(np.abs(model.gamma - brute.gamma_z)))
                response_dev = float(
                    np.max(np.abs(np.diag(model.response) - brute.mean_sx))
                )
                fisher_analytic = 4 * moments.partition_covariance(
                    n, brute.global_var_sy, counts
                )
                fisher_dev = float(np.max(np.abs(fisher_analytic - 4 * brute.gamma_y)))

                for check, dev in (
                    ("moments", global_dev),
                    ("gamma", gamma_dev),
                    ("response", response_dev),
                    ("fisher", fisher_dev),
                ):
                    rows.append((check, n, chi_t, label, dev, dev < 1e-10))
    chi_best, xi2_min = oat.best_squeezing(100)
    late = oat.collective_moments(oat.evolve_oat(100, 1.0)).xi2
    rows.append(("xi2_dip", 100, chi_best, "collective", xi2_min, xi2_min < 1 < late))
    return rows


def cmd_oracle_validate(args) -> int:
    rows = oracle_check_rows(args.max_n)
    header = ("check", "n_atoms", "chi_t", "partition", "max_abs_deviation", "passed")
    _write_rows(header, rows, args.format or "csv", args.out, args.quiet)
    return 0


def cmd_crb_check(args) -> int:
    """Harmonic Cramer-Rao check on a simulated scenario.

    Needs resource.var_sy.  The pure-state bound applies to equal splits
    without detection noise; anything else is reported as not_applicable.
    """
    doc = load_document(args.scenario)
    spec = build_spec(doc, seed=args.seed, mu=args.mu)
    resource = spec.resource
    header = ("n_atoms", "m_sensors", "xi2", "sigma_h", "lambda_h", "ratio", "status")
    fmt, path, _ = _resolve_output(args, doc)
    if len(set(spec.partition.atom_counts)) != 1 or spec.detection_noise_sd > 0:
        rows = [(resource.n_atoms, spec.m_sensors, resource.xi2, "", "", "", "not_applicable")]
        _write_rows(header, rows, fmt, path, args.quiet)
        return 0
    if resource.var_sy is None:
        raise ScenarioError(
            "crb-check needs resource.var_sy (a number or 'minimum-uncertainty')"
        )
    report = simulate.run_protocol(spec)
    fisher = bounds.fisher_matrix(resource, spec.m_sensors)
    check = bounds.crb_check(report.covariance, fisher, mu=report.mu)
    rel = float(np.sqrt(2.0 / (report.mu - report.dof)))
    ok = check.sigma_h >= check.lambda_h - 3 * rel * check.sigma_h
    rows = [
        (
            resource.n_atoms,
            spec.m_sensors,
            resource.xi2,
            check.sigma_h,
            check.lambda_h,
            check.ratio,
            "ok" if ok else "violated",
        )
    ]
    _write_rows(header, rows, fmt, path, args.quiet)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinarray",
        description="Simulator for joint multiparameter estimation with "
        "entangled collective-spin sensor arrays.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario YAML file")
        p.add_argument("--out", help="output file (default: output.path or stdout)")
        p.add_argument("--format", choices=("csv", "json"), help="output format")
        p.add_argument("--seed", type=int, help="override simulate.seed")
        p.add_argument("--mu", type=int, help="override simulate.mu_total")
        p.add_argument("--quiet", action="store_true", help="suppress progress notes")

    p = sub.add_parser(
        "gain-table",
        help="closed-form gains for the scenario",
        description="Analytic gains. Columns: formula, gain (variance ratio), gain_db.",
    )
    common(p)
    p.set_defaults(func=cmd_gain_table)

    p = sub.add_parser(
        "simulate",
        help="Monte Carlo run of the full protocol",
        description="Report columns: parameter, estimate, variance, sql, gain_db, "
        "se_gain_db. Shot files: config_index, shot_index, S_k^z per sensor. "
        "Gain-matrix files: configuration label then one gain_db column per "
        "matched combination.",
    )
    common(p)
    p.add_argument("--shots-out", help="also write raw shots CSV")
    p.add_argument("--gain-matrix-out", help="also write the preparation/combination gain matrix")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser(
        "combo-scan",
        help="mixing-angle sweep with optimal allocation (M=2)",
        description="Columns: alpha_deg, atom_counts, signs, variance, sql, gain, "
        "gain_db, theory_db.",
    )
    common(p)
    p.add_argument(
        "--angles",
        help="comma-separated mixing angles in degrees (default: ten angles "
        "matching splitting ratios 0.81..0.40 with both sign settings)",
    )
    p.set_defaults(func=cmd_combo_scan)

    p = sub.add_parser(
        "oracle-validate",
        help="cross-check analytic moments against the 2^N brute force",
        description="Columns: check (moments|gamma|response|fisher|xi2_dip), "
        "n_atoms, chi_t, partition, max_abs_deviation, passed. The xi2_dip row "
        "stores the minimal xi^2 of the N=100 twisting scan instead of a deviation.",
    )
    common(p, scenario=False)
    p.add_argument("--max-n", type=int, default=10, help="largest atom number (<= 12)")
    p.set_defaults(func=cmd_oracle_validate)

    p = sub.add_parser(
        "crb-check",
        help="harmonic Cramer-Rao bound check for a scenario",
        description="Columns: n_atoms, m_sensors, xi2, sigma_h, lambda_h, ratio, "
        "status (ok|violated|not_applicable). The pure-state bound needs an "
        "equal split and no detection noise; other scenarios report "
        "not_applicable.",
    )
    common(p)
    p.set_defaults(func=cmd_crb_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except InfeasiblePlanError as exc:
        print(f"infeasible plan: {exc}", file=sys.stderr)
        return 3
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
