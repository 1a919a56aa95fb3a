"""Scenario documents: one YAML file drives every CLI subcommand.

Sections and keys (strict: unknown keys are rejected):

  resource:   n_atoms, and either (xi2_db | xi2) + contrast or
              var_sz + mean_sx; optional var_sy (number or the string
              "minimum-uncertainty")
  partition:  atom_counts (list of ints or "equal:M"),
              contrasts (list or scalar; defaults to the resource contrast)
  plan:       configs ("hadamard" or explicit sign lists), reps ("equal"
              or explicit list matching configs)
  encoding:   theta (list of radians; defaults to zeros)
  simulate:   mu_total, seed, detection_noise_sd (default 0)
  output:     format (csv | json), path, optional shots_path and
              gain_matrix_path
"""

from __future__ import annotations

import numpy as np
import yaml

from .errors import ScenarioError
from .moments import SensorPartition, SqueezedResource, from_db
from .protocol import (
    ConfigurationPlan,
    SignConfiguration,
    configuration_set,
    hadamard_plan,
    largest_remainder_round,
)
from .simulate import ScenarioSpec

_ALLOWED_KEYS = {
    "resource": {"n_atoms", "xi2_db", "xi2", "contrast", "var_sz", "mean_sx", "var_sy"},
    "partition": {"atom_counts", "contrasts"},
    "plan": {"configs", "reps"},
    "encoding": {"theta"},
    "simulate": {"mu_total", "seed", "detection_noise_sd"},
    "output": {"format", "path", "shots_path", "gain_matrix_path"},
}


def load_document(path) -> dict:
    """Parse and validate a scenario YAML file (strict key checking)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file: {exc}") from exc
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ScenarioError(f"scenario parse error{where}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a mapping of sections")
    validate_document(doc)
    return doc


def validate_document(doc: dict):
    for section, body in doc.items():
        if section not in _ALLOWED_KEYS:
            raise ScenarioError(f"unknown section {section!r}")
        if not isinstance(body, dict):
            raise ScenarioError(f"section {section!r} must be a mapping")
        unknown = set(body) - _ALLOWED_KEYS[section]
        if unknown:
            raise ScenarioError(
                f"unknown key(s) {sorted(unknown)} in section {section!r}"
            )
    for required in ("resource", "partition"):
        if required not in doc:
            raise ScenarioError(f"missing required section {required!r}")


def _section(doc, name) -> dict:
    body = doc.get(name)
    if body is None:
        raise ScenarioError(f"missing required section {name!r}")
    return body


def build_resource(doc: dict) -> SqueezedResource:
    body = _section(doc, "resource")
    try:
        n_atoms = int(body["n_atoms"])
    except KeyError:
        raise ScenarioError("resource.n_atoms is required") from None

    var_sy = body.get("var_sy")
    minimum = isinstance(var_sy, str)
    if minimum and var_sy != "minimum-uncertainty":
        raise ScenarioError(
            f"resource.var_sy must be a number or 'minimum-uncertainty', got {var_sy!r}"
        )
    try:
        if "var_sz" in body or "mean_sx" in body:
            if "xi2_db" in body or "xi2" in body or "contrast" in body:
                raise ScenarioError(
                    "resource: give either (xi2_db|xi2, contrast) or (var_sz, mean_sx)"
                )
            resource = SqueezedResource(
                n_atoms=n_atoms,
                var_sz=float(body["var_sz"]),
                mean_sx=float(body["mean_sx"]),
                var_sy=None if minimum else (None if var_sy is None else float(var_sy)),
            )
            if minimum:
                resource = SqueezedResource.from_squeezing(
                    n_atoms, resource.xi2, resource.contrast, minimum_uncertainty=True
                )
            return resource
        if "xi2_db" in body and "xi2" in body:
            raise ScenarioError("resource: give xi2_db or xi2, not both")
        if "xi2_db" in body:
            xi2 = float(from_db(float(body["xi2_db"])))
        elif "xi2" in body:
            xi2 = float(body["xi2"])
        else:
            raise ScenarioError("resource needs xi2_db, xi2, or var_sz/mean_sx")
        contrast = float(body.get("contrast", 1.0))
        return SqueezedResource.from_squeezing(
            n_atoms,
            xi2,
            contrast,
            var_sy=None if (minimum or var_sy is None) else float(var_sy),
            minimum_uncertainty=minimum,
        )
    except (ValueError, TypeError, KeyError) as exc:
        raise ScenarioError(f"invalid resource: {exc}") from exc


def build_partition(doc: dict, resource: SqueezedResource) -> SensorPartition:
    body = _section(doc, "partition")
    counts = body.get("atom_counts")
    if counts is None:
        raise ScenarioError("partition.atom_counts is required")
    try:
        if isinstance(counts, str):
            tag, _, m_str = counts.partition(":")
            if tag != "equal" or not m_str:
                raise ScenarioError(
                    f"partition.atom_counts string must look like 'equal:M', got {counts!r}"
                )
            m = int(m_str)
            base = SensorPartition.equal_split(resource.n_atoms, m)
            counts = base.atom_counts
        else:
            counts = tuple(int(n) for n in counts)
        contrasts = body.get("contrasts", resource.contrast)
        if np.isscalar(contrasts):
            contrasts = (float(contrasts),) * len(counts)
        else:
            contrasts = tuple(float(c) for c in contrasts)
        partition = SensorPartition(atom_counts=counts, contrasts=contrasts)
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"invalid partition: {exc}") from exc
    if partition.n_atoms != resource.n_atoms:
        raise ScenarioError(
            f"partition atoms {partition.n_atoms} != resource atoms {resource.n_atoms}"
        )
    return partition


def build_plan(doc: dict, m_sensors: int, mu_total: int) -> ConfigurationPlan:
    body = doc.get("plan", {"configs": "hadamard"})
    configs = body.get("configs", "hadamard")
    reps = body.get("reps", "equal")
    try:
        if isinstance(configs, str):
            if configs != "hadamard":
                raise ScenarioError(
                    f"plan.configs must be 'hadamard' or sign lists, got {configs!r}"
                )
            if reps == "equal":
                return hadamard_plan(m_sensors, mu_total)
            sign_rows = [cfg.signs for cfg in configuration_set(m_sensors)]
        else:
            sign_rows = [tuple(int(s) for s in row) for row in configs]
        if reps == "equal":
            rep_list = largest_remainder_round(
                np.full(len(sign_rows), mu_total / len(sign_rows)), mu_total
            )
        else:
            rep_list = [int(r) for r in reps]
            if len(rep_list) != len(sign_rows):
                raise ScenarioError(
                    f"{len(rep_list)} rep counts for {len(sign_rows)} configurations"
                )
            if sum(rep_list) != mu_total:
                raise ScenarioError(
                    f"plan.reps sum to {sum(rep_list)} but simulate.mu_total is {mu_total}"
                )
        entries = tuple(
            (SignConfiguration(signs=row), int(r)) for row, r in zip(sign_rows, rep_list)
        )
        return ConfigurationPlan(entries=entries)
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"invalid plan: {exc}") from exc


def build_spec(doc: dict, seed: int | None = None, mu: int | None = None) -> ScenarioSpec:
    """Assemble the simulation spec; seed/mu arguments override the document."""
    resource = build_resource(doc)
    partition = build_partition(doc, resource)
    sim = doc.get("simulate", {})
    if mu is None:
        if "mu_total" not in sim:
            raise ScenarioError("simulate.mu_total is required (or pass --mu)")
        mu = int(sim["mu_total"])
    if seed is None:
        if "seed" not in sim:
            raise ScenarioError("simulate.seed is required (or pass --seed)")
        seed = int(sim["seed"])
    noise = float(sim.get("detection_noise_sd", 0.0))
    plan = build_plan(doc, partition.m_sensors, mu)
    theta = doc.get("encoding", {}).get("theta")
    if theta is None:
        theta = np.zeros(partition.m_sensors)
    else:
        theta = np.asarray([float(t) for t in theta], dtype=float)
    try:
        return ScenarioSpec(
            resource=resource,
            partition=partition,
            plan=plan,
            true_theta=theta,
            detection_noise_sd=noise,
            seed=seed,
        )
    except ValueError as exc:
        raise ScenarioError(f"inconsistent scenario: {exc}") from exc


def output_options(doc: dict) -> dict:
    body = doc.get("output", {})
    fmt = body.get("format", "csv")
    if fmt not in ("csv", "json"):
        raise ScenarioError(f"output.format must be csv or json, got {fmt!r}")
    return {
        "format": fmt,
        "path": body.get("path"),
        "shots_path": body.get("shots_path"),
        "gain_matrix_path": body.get("gain_matrix_path"),
    }
