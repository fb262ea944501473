import os

import numpy as np
import pytest

from mmflow import presets as preset_registry
from mmflow.cli import (RunReport, SuiteResult, _interface_resolution_check, check_exhaustive, main, parse_config,
                        preset, read_pgm, resolve_threads, run, verify, write_pgm)
from mmflow.common import ConfigError
from mmflow.core import MINIMAL, CellSet, LevelFunction
from mmflow.perimeter import CROFTON


SMALL_DISK = u"""
[grid]
nx = 32
ny = 32
dx = 0.03125
margin = 4

[nonlinearity]
kind = negative_part

[scheme]
h = 0.005
T = 0.02

[initial]
kind = disk
center = 0, 0
radius = 0.3

[outputs]
frame_stride = 2

[checks]
shrinking = yes
radius_tolerance = 3
"""

SMALL_CONE = u"""
[grid]
nx = 32
ny = 32
dx = 0.03125
margin = 4

[scheme]
h = 0.005
T = 0.01
levels = 8

[initial]
kind = cone
center = 0, 0
radius = 0.25
floor = -0.1
ceil = 0.1

[checks]
modulus = yes
level_tracking = yes
tracking_steps = 1
"""


def test_parse_small_config():
    config = parse_config(SMALL_DISK, "small")
    assert config.grid.nx == 32
    assert config.params.step_count == 4
    assert config.params.margin == 4
    assert config.set_mode
    assert config.checks['shrinking'] and not config.checks['barrier']
    assert config.initial_condition() == CellSet.disk(config.grid, (0.0, 0.0), 0.3)


def test_documented_defaults():
    config = parse_config(SMALL_DISK.replace("margin = 4\n", ""))
    assert config.params.margin == 8
    assert config.params.level_count == 64
    assert config.params.minimizer_choice == MINIMAL
    assert config.perimeter.kind == CROFTON
    with pytest.raises(ConfigError) as e:
        parse_config(SMALL_DISK.replace("kind = negative_part", "kind = clamp"))
    assert "nonlinearity.M: required for clamp" in e.value.errors


def test_config_errors_name_every_offending_key():
    text = SMALL_DISK.replace("h = 0.005", "h = -1").replace("frame_stride = 2", "frame_stride = 2\ncolor = red")
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    errors = e.value.errors
    assert any(message.startswith("scheme.h") for message in errors)
    assert any(message.startswith("outputs.color") for message in errors)
    assert e.value.exit_code == 3


def test_missing_sections_and_keys():
    with pytest.raises(ConfigError) as e:
        parse_config(u"[grid]\nnx = 8\n")
    errors = e.value.errors
    assert "scheme: missing required section" in errors
    assert "initial: missing required section" in errors
    assert "grid.ny: missing required key" in errors


def test_horizon_must_be_a_multiple_of_the_step():
    with pytest.raises(ConfigError) as e:
        parse_config(SMALL_DISK.replace("T = 0.02", "T = 0.0175"))
    assert any(message.startswith("scheme.T") for message in e.value.errors)


def test_checks_need_a_matching_initial_condition():
    with pytest.raises(ConfigError) as e:
        parse_config(SMALL_DISK + u"modulus = yes\n")
    assert any(message.startswith("checks.modulus") for message in e.value.errors)


def test_margin_is_checked_at_parse_time():
    text = SMALL_DISK.replace("kind = negative_part", "kind = clamp\nM = 100")
    with pytest.raises(ConfigError) as e:
        parse_config(text)
    assert any(message.startswith("grid.margin") for message in e.value.errors)


@pytest.mark.parametrize("name", sorted(preset_registry.presets))
def test_presets_parse(name):
    config = preset(name)
    assert config.name == name
    assert config.params.step_count >= 1
    assert preset_registry.preset_text(name).startswith("# mmflow preset %s" % name)


def test_unknown_preset():
    with pytest.raises(preset_registry.UnknownPreset):
        preset("no-such-preset")


def test_thread_resolution(monkeypatch):
    monkeypatch.delenv('MMFLOW_THREADS', raising=False)
    assert resolve_threads() == 1
    monkeypatch.setenv('MMFLOW_THREADS', '4')
    assert resolve_threads() == 4
    assert resolve_threads(2) == 2
    with pytest.raises(ConfigError):
        resolve_threads(0)


def test_pgm_frames(tmpdir):
    pixels = np.zeros((5, 3), dtype=np.uint8)
    pixels[1, 2] = 255
    pixels[4, 0] = 17
    path = str(tmpdir.join('frame.pgm'))
    write_pgm(path, pixels)
    with open(path, 'rb') as f:
        assert f.read(2) == b'P5'
    assert np.array_equal(read_pgm(path), pixels)


def test_run_disk(tmpdir):
    out = str(tmpdir.join('disk'))
    report = run(parse_config(SMALL_DISK, "small"), out, threads=1)
    names = [check.name for check in report.checks]
    assert names == ['radius_tracking', 'interface_resolution', 'monotone_shrinking']
    # 0.005 * (1 / 0.3) / 0.03125 is about half a cell per step
    assert report.checks[1].value == pytest.approx(0.5333, abs=1e-3)
    assert not report.checks[1].passed
    assert report.checks[2].passed
    assert len(report.displacement) == 4
    assert len(report.radius_rows) == 4
    assert len(report.flow_stats) == 4
    for name in ('report.txt', 'radius.csv', 'frame_0000.pgm', 'frame_0002.pgm', 'frame_0004.pgm'):
        assert os.path.exists(os.path.join(out, name))
    with open(os.path.join(out, 'report.txt')) as f:
        text = f.read()
    assert text.startswith("run:\n  name: small\n")
    assert "monotone_shrinking" in text


def test_identical_runs_write_identical_files(tmpdir):
    outs = [str(tmpdir.join(name)) for name in ("first", "second")]
    for out in outs:
        run(parse_config(SMALL_DISK, "small"), out, threads=1)
    names = sorted(os.listdir(outs[0]))
    assert names == sorted(os.listdir(outs[1]))
    for name in names:
        with open(os.path.join(outs[0], name), "rb") as a, open(os.path.join(outs[1], name), "rb") as b:
            assert a.read() == b.read(), name
    with open(os.path.join(outs[0], "report.txt")) as f:
        assert "wall_clock" not in f.read()


def test_run_cone(tmpdir):
    out = str(tmpdir.join('cone'))
    config = parse_config(SMALL_CONE, "cone")
    assert not config.set_mode
    assert isinstance(config.initial_condition(), LevelFunction)
    report = run(config, out, threads=2)
    assert [check.name for check in report.checks] == ['modulus_of_continuity', 'level_tracking']
    assert report.checks[1].passed
    assert os.path.exists(os.path.join(out, 'frame_0002.txt'))


def test_raster_initial_condition(tmpdir):
    config = parse_config(SMALL_DISK, "small")
    pixels = np.where(config.initial_condition().membership, 255, 0)
    path = str(tmpdir.join('initial.pgm'))
    write_pgm(path, pixels)
    text = SMALL_DISK.replace("kind = disk\ncenter = 0, 0\nradius = 0.3", "kind = raster\npath = %s" % path)
    text = text.replace("radius_tolerance = 3\n", "")
    raster = parse_config(text, "raster")
    assert raster.initial_condition() == config.initial_condition()


def test_exhaustive_suite_passes():
    result = check_exhaustive(np.random.RandomState(7), 5)
    assert result == SuiteResult('exhaustive_oracle', 5, 0, True)


def test_main_exit_codes(tmpdir, capsys):
    assert main(['preset', '--list']) == 0
    assert 'shrink-disk-identity' in capsys.readouterr().out
    assert main(['preset', '--name', 'no-such-preset', '--out', str(tmpdir)]) == 2
    bad = tmpdir.join('bad.ini')
    bad.write(SMALL_DISK.replace("h = 0.005", "h = zero"))
    assert main(['run', '--config', str(bad), '--out', str(tmpdir.join('out'))]) == 3
    good = tmpdir.join('good.ini')
    good.write(SMALL_DISK.replace("radius_tolerance = 3\n", ""))
    assert main(['--threads', '1', 'run', '--config', str(good), '--out', str(tmpdir.join('run'))]) == 0
    with pytest.raises(ConfigError):
        verify('exhaustive')


@pytest.mark.slow
def test_quick_verification_suite():
    results = verify('quick', seed=0)
    assert [r.name for r in results] == ['exhaustive_oracle', 'comparison_principle', 'operator_laws',
                                         'perimeter_properties']
    assert all(r.passed for r in results)


PINNED = {
    # h / (r0 dx) = 0.18: cell-center distances hold the disk; measured 24.41 cells off sqrt(r0^2 - 2t)
    'shrink-disk-identity': "pinned disk: radius_tracking 24.41 cells against 3, interface_resolution 0.18",
    'shrink-disk-power': "pinned disk: interface_resolution 0.091 cells per step against 1",
    'fd-crosscheck-disk': "pinned disk: interface_resolution 0.18, finite differences move about 25 cells",
    }


def _preset_case(name):
    if name in PINNED:
        return pytest.param(name, marks=pytest.mark.xfail(strict=True, reason=PINNED[name]))
    return name


@pytest.mark.slow
@pytest.mark.parametrize("name", [_preset_case(name) for name in sorted(preset_registry.presets)])
def test_preset_runs(name, tmpdir):
    report = run(preset(name), str(tmpdir), threads=int(os.environ.get('MMFLOW_THREADS', '1')))
    assert report.checks
    assert os.path.exists(str(tmpdir.join('report.txt')))
    failed = [(check.name, check.value, check.tolerance) for check in report.checks if not check.passed]
    assert report.passed, failed


def test_pinned_presets_report_their_resolution():
    for name in PINNED:
        config = preset(name)
        report = RunReport(config)
        _interface_resolution_check(config, report)
        assert [check.name for check in report.checks] == ['interface_resolution']
        assert not report.checks[0].passed
    for name in ('shrink-disk-moving', 'fd-crosscheck-moving'):
        config = preset(name)
        report = RunReport(config)
        _interface_resolution_check(config, report)
        assert report.checks[0].value == pytest.approx(1.28)
        assert report.checks[0].passed
