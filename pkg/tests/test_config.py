import json
import math

import pytest

from hallmhd.config import DEFAULTS, SCHEMA, load, parse_config, resolve
from hallmhd.integrator import ConfigError

MINIMAL = {"N": 8, "n": 2, "T": 0.1, "dt": 0.01, "X0": {"kind": "random_solenoidal", "amplitude": 0.5}}


def with_(**kw):
    d = json.loads(json.dumps(MINIMAL))
    d.update(kw)
    return d


def test_minimal_config_gets_defaults():
    cfg, resolved = resolve(MINIMAL)
    assert resolved["L"] == pytest.approx(2 * math.pi)
    assert resolved["physics"] == {"nu1": 1.0, "nu2": 1.0, "s_hartmann": 1.0, "eps_hall": 1.0}
    assert cfg.params.s_hartmann == 1.0 and cfg.params.eps_hall == 1.0
    assert cfg.n_paths == 1 and cfg.noise is None and cfg.seed == 0
    assert resolved["schema_version"] == 1
    assert set(DEFAULTS) <= set(resolved)


def test_alias_violation_names_the_bound():
    with pytest.raises(ConfigError, match=r"alias bound pi\(N-1\)/L = 3\.5"):
        resolve(with_(n=4))


def test_noncoercive_noise_is_rejected():
    noise = {"directions": [{"field": 1, "b": [[{"m": [0, 0, 0], "cos": 1.5}], [], []]}]}
    with pytest.raises(ConfigError, match="coercivity"):
        resolve(with_(noise=noise))


def test_coercive_noise_reports_admissibility():
    noise = {"directions": [{"field": 1, "b": [[{"m": [0, 0, 0], "cos": 0.5}], [], []],
                             "c": [{"m": [0, 0, 0], "cos": 0.2}]}]}
    cfg, resolved = resolve(with_(noise=noise))
    adm = resolved["noise"]["admissibility"]
    assert adm["coercivity_margin"][0] == 2 - 0.25
    assert adm["passed"]
    assert cfg.noise.J == 1


@pytest.mark.parametrize("patch,path", [
    ({"N": 7}, "N"),
    ({"dt": -1}, "dt"),
    ({"physics": {"nu1": 0}}, "physics.nu1"),
    ({"bogus": 1}, "<root>"),
    ({"record": {"snapshot_stride": -2}}, "record.snapshot_stride"),
    ({"schema_version": 2}, "schema_version"),
])
def test_schema_errors_carry_field_paths(patch, path):
    with pytest.raises(ConfigError, match=f"{path}:"):
        resolve(with_(**patch))


def test_missing_required_key():
    d = dict(MINIMAL)
    del d["X0"]
    with pytest.raises(ConfigError, match="'X0' is a required property"):
        resolve(d)


def test_explicit_scheme_ceiling():
    with pytest.raises(ConfigError, match="ceiling"):
        resolve(with_(dynamics={"scheme": "explicit"}, dt=0.5, T=1.0))


def test_mode_outside_ball_is_a_config_error():
    with pytest.raises(ConfigError, match="outside"):
        resolve(with_(X0={"kind": "single_mode", "m": [3, 0, 0]}))


def test_files(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(MINIMAL))
    assert parse_config(p).lattice.N == 8
    assert load(p)[1]["n"] == 2
    with pytest.raises(ConfigError, match="not found"):
        load(tmp_path / "missing.json")
    p.write_text("{not json")
    with pytest.raises(ConfigError, match="JSON"):
        load(p)
    p.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load(p)


def test_schema_is_draft_2020_12():
    assert SCHEMA["$schema"].endswith("2020-12/schema")
