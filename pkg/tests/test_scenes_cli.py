"""Tests for scene files, ray fans, serialization, and the CLI."""

import argparse
import json
import math

import numpy as np
import pytest

from edgeray import (
    EdgePhasePoint,
    PointSource,
    blow_down,
    blow_down_segment,
    builtin_scene,
    fan_directions,
    integrate_interior,
    parse_scene,
    run_scenario,
    scenario_rays,
    scene_values,
    serialize_dump,
    serialize_scene,
    wave_symbol,
)
from edgeray.cli import _load_scene, main
from edgeray.errors import ConfigError, DimensionError
from edgeray.rays_io import dump_columns, emit_plot_data

BUILTINS = ("product_cone(1.3)", "product_edge(1, 1)", "product_edge(2, 2)",
            "blowup_curve_r3", "perturbed_edge(0.3)", "sphere_edge")


CUSTOM_SCENE = """
# wobbly circle fiber over a point edge
b = 0; f = 1
k = [[(1 + 0.2*sin(z1))^2]]
fiber = circle(6.283185307179586)
t_span = [0.0, 1.0]
source = [0.0, 0.5, 1.2, 1.0, 1.0, 0.0]
policy = same_fiber
"""


def test_builtin_scene_references():
    config = builtin_scene("product_cone(2.0)")
    assert config.spec.f == 1
    assert config.name == "product_cone(2.0)"
    assert builtin_scene("product_edge(2, 2)").spec.b == 2
    assert builtin_scene("sphere_edge").spec.f == 2
    for bad in ("nope", "product_cone(x)", "product_cone(1, 2, 3)",
                "product_cone(-1.0)", "1bad"):
        with pytest.raises(ConfigError):
            builtin_scene(bad)


def test_builtin_round_trips():
    for name in BUILTINS:
        config = builtin_scene(name)
        text = serialize_scene(config)
        again = parse_scene(text)
        assert scene_values(again) == scene_values(config)


def test_custom_scene_parses_and_round_trips():
    config = parse_scene(CUSTOM_SCENE)
    assert config.name == "custom"
    assert config.spec.b == 0 and config.spec.f == 1
    assert config.spec.fiber.kind == "circle"
    assert isinstance(config.source, EdgePhasePoint)
    assert config.source.x == 0.5
    assert config.t_span == (0.0, 1.0)
    again = parse_scene(serialize_scene(config))
    assert scene_values(again) == scene_values(config)


def test_quoted_matrix_entries_are_tolerated():
    quoted = CUSTOM_SCENE.replace('[[(1 + 0.2*sin(z1))^2]]',
                                  '[["(1 + 0.2*sin(z1))^2"]]')
    a = parse_scene(CUSTOM_SCENE)
    b = parse_scene(quoted)
    assert scene_values(a) == scene_values(b)


def test_scene_validation_errors():
    with pytest.raises(ConfigError, match="either source or origin"):
        parse_scene(CUSTOM_SCENE + "origin = [0.5, 1.0]\n")
    with pytest.raises(ConfigError, match="fan_count"):
        parse_scene(CUSTOM_SCENE + "fan_count = 4\n")
    with pytest.raises(ConfigError, match="unknown scene key"):
        parse_scene("builtin = product_cone(1.0)\nwhatever = 3\n")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_scene("builtin = product_cone(1.0)\nseed = 1\nseed = 2\n")
    with pytest.raises(ConfigError, match="fix the metric"):
        parse_scene("builtin = product_cone(1.0)\nk = [[1]]\n")
    with pytest.raises(ConfigError, match="missing metric key"):
        parse_scene("b = 0; f = 1\nfiber = torus\n")
    with pytest.raises(ConfigError, match="increasing"):
        parse_scene("builtin = product_cone(1.0)\nt_span = [1.0, 0.5]\n")
    with pytest.raises(DimensionError):
        parse_scene("builtin = product_cone(1.0)\nsource = [0, 1, 2]\n")
    with pytest.raises(DimensionError):
        parse_scene("builtin = product_cone(1.0)\norigin = [0.5, 0, 0]\n")
    with pytest.raises(ConfigError, match="format"):
        parse_scene("builtin = product_cone(1.0)\nformat = yaml\n")


def test_fan_directions_deterministic_unit_vectors():
    a = fan_directions(3, 12, seed=7)
    b = fan_directions(3, 12, seed=7)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (12, 3)
    np.testing.assert_allclose(np.linalg.norm(a, axis=1), 1.0, atol=1e-12)
    c = fan_directions(3, 12, seed=8)
    assert np.max(np.abs(a - c)) > 1e-3
    d = fan_directions(1, 5, seed=0)
    np.testing.assert_array_equal(d, [[1.0], [-1.0], [1.0], [-1.0], [1.0]])


def test_scenario_rays_are_characteristic():
    config = builtin_scene("product_edge(1, 1)")
    assert scenario_rays(config) == [config.source]
    config.source = PointSource(origin=np.array([0.6, 0.1, 0.5]),
                                fan_count=8)
    rays = scenario_rays(config)
    assert len(rays) == 8
    for q in rays:
        assert q.x == 0.6 and q.tau == 1.0
        assert abs(wave_symbol(config.spec, q)) < 1e-12
    config.seed = 11
    rays2 = scenario_rays(config)
    assert any(abs(a.xi - b.xi) > 1e-6 for a, b in zip(rays, rays2))
    config.source = PointSource(origin=np.array([0.0, 0.1, 0.5]),
                                fan_count=2)
    with pytest.raises(ConfigError, match="interior"):
        scenario_rays(config)


def test_blow_down_maps_chart_to_cartesian():
    pt = blow_down(1.0, 2.0, 0.0)
    np.testing.assert_allclose(pt, [1.0, 0.0, 2.0], atol=1e-15)
    pts = blow_down(np.array([1.0, 2.0]), np.array([0.0, 1.0]),
                    np.array([0.0, math.pi / 2]))
    assert pts.shape == (2, 3)
    np.testing.assert_allclose(pts[1], [0.0, 2.0, 1.0], atol=1e-12)
    config = builtin_scene("blowup_curve_r3")
    segment = integrate_interior(config.spec, config.source, direction=-1,
                                 s_max=0.3)
    path3 = blow_down_segment(segment)
    assert path3.shape == (len(segment.s), 3)
    np.testing.assert_allclose(
        path3[0], blow_down(config.source.x, config.source.y[0],
                            config.source.z[0]), atol=1e-14)


def test_load_scene_overrides():
    args = argparse.Namespace(seed=9, rtol=1e-9, x_stop=1e-3,
                              out="dump.csv", format="jsonl")
    config = _load_scene("product_cone(1.0)", args)
    assert config.seed == 9
    assert config.settings.rtol == 1e-9
    assert config.settings.x_stop == 1e-3
    assert config.out == "dump.csv"
    assert config.format == "jsonl"
    args = argparse.Namespace(seed=None, rtol=None, x_stop=None,
                              out=None, format=None)
    config = _load_scene("product_cone(1.0)", args)
    assert config.seed == 0 and config.out is None


def test_cli_validate(capsys):
    assert main(["validate", "product_cone(1.0)"]) == 0
    out = capsys.readouterr().out
    assert "normal form OK" in out
    assert "dx row clean: True" in out
    assert main(["validate", "no_such_scene"]) == 2
    err = capsys.readouterr().err
    assert "config error" in err


def test_cli_trace_to_file(tmp_path, capsys):
    out_file = tmp_path / "rays.csv"
    code = main(["trace", "product_cone(1.0)", "--out", str(out_file)])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "scene product_cone(1.0)" in stdout
    assert "dump written to" in stdout
    text = out_file.read_text()
    header = text.splitlines()[0]
    assert header == ",".join(dump_columns(0, 1))
    assert len(text.splitlines()) > 10


def test_cli_trace_jsonl_stdout(capsys):
    code = main(["trace", "product_cone(1.0)", "--format", "jsonl"])
    assert code == 0
    out = capsys.readouterr().out
    rows = [json.loads(line) for line in out.splitlines()
            if line.startswith("{")]
    assert rows
    assert set(rows[0]) == set(dump_columns(0, 1))
    kinds = {row["branch_kind"] for row in rows}
    assert "incident" in kinds


def test_cli_trace_scene_file(tmp_path, capsys):
    scene = tmp_path / "scene.cfg"
    scene.write_text(CUSTOM_SCENE)
    assert main(["trace", str(scene)]) == 0
    out = capsys.readouterr().out
    assert "scene custom" in out


def test_cli_eigencheck(capsys):
    assert main(["eigencheck", "product_edge(1, 1)", "--count", "3"]) == 0
    out = capsys.readouterr().out
    assert "radial linearization OK" in out
    assert "multiplicities" in out
    point = "0,0,0.2,1.0,0,0.8,0.6,0"
    assert main(["eigencheck", "product_edge(1, 1)", "--point", point]) == 0
    capsys.readouterr()
    assert main(["eigencheck", "product_edge(1, 1)", "--point", "1,2"]) == 2


def test_cli_partners(capsys):
    assert main(["partners", "product_cone(1.0)", "--z", "0.3"]) == 0
    out = capsys.readouterr().out
    assert "1 partner(s) at fiber arc pi" in out
    assert main(["partners", "product_cone(1.0)", "--z", "0.3,0.4"]) == 2


def test_cli_orders(capsys):
    assert main(["orders", "--n", "3", "--f", "1", "--s", "0"]) == 0
    out = capsys.readouterr().out
    assert "incident <-1/2, diffracted <0" in out
    assert "a-priori -3/4, nonfocusing degree <-1/4" in out
    assert main(["orders", "--m", "1", "--l", "1/2", "--f", "1"]) == 0
    out = capsys.readouterr().out
    assert "threshold incoming (m=1, l=1/2, f=1): inadmissible" in out
    assert "threshold outgoing (m=1, l=1/2, f=1): inadmissible" in out
    assert main(["orders", "--k", "2", "--eps", "1/8"]) == 0
    out = capsys.readouterr().out
    assert "k'=>8" in out
    assert main(["orders"]) == 2


def test_plot_data_projections():
    config = builtin_scene("product_edge(1, 1)")
    result = run_scenario(config)
    dump = result.dump
    text = emit_plot_data(dump, "tx")
    first = text.splitlines()[0].split()
    assert len(first) == 3 and first[2] == "0"
    assert "\n\n" in text  # one block per branch
    emit_plot_data(dump, "yx")
    emit_plot_data(dump, "fiber-angle")
    with pytest.raises(ConfigError, match="unknown projection"):
        emit_plot_data(dump, "3d")
    only_root = emit_plot_data(dump, "tx", branches={"0"})
    assert "\n\n" not in only_root
    with pytest.raises(ConfigError, match="no rows"):
        emit_plot_data(dump, "tx", branches={"9"})
    cone = run_scenario(builtin_scene("product_cone(1.0)")).dump
    with pytest.raises(ConfigError, match="base coordinate"):
        emit_plot_data(cone, "yx")


def test_dump_formats():
    config = builtin_scene("product_cone(1.0)")
    dump = run_scenario(config).dump
    csv_text = serialize_dump(dump, "csv")
    assert csv_text.splitlines()[0] == ",".join(dump_columns(0, 1))
    jsonl_text = serialize_dump(dump, "jsonl")
    row = json.loads(jsonl_text.splitlines()[0])
    assert list(row) == sorted(row)
    with pytest.raises(ConfigError):
        serialize_dump(dump, "yaml")


FAN_SCENE = """
builtin = product_edge(1, 1)
origin = [0.6, 0.1, 0.5]
fan_count = 6
seed = 3
t_span = [0.0, 0.9]
"""


def test_trace_output_is_deterministic(tmp_path, monkeypatch):
    scene = tmp_path / "fan.cfg"
    scene.write_text(FAN_SCENE)

    def dump_bytes(threads):
        monkeypatch.setenv("EDGERAY_THREADS", str(threads))
        config = parse_scene(scene.read_text())
        result = run_scenario(config)
        return serialize_dump(result.dump, "csv").encode()

    one = dump_bytes(1)
    again = dump_bytes(1)
    four = dump_bytes(4)
    assert one == again
    assert one == four
    monkeypatch.delenv("EDGERAY_THREADS")
    free = run_scenario(parse_scene(scene.read_text()))
    assert serialize_dump(free.dump, "csv").encode() == one
