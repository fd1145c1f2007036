import json

import numpy as np
import pandas as pd
import pytest

from laat.formats import file_digest, read_cloud, read_scores, write_cloud, write_scores
from laat.main import _recordable, main

FAST = ['--epochs', '2', '--ants', '3', '--steps', '20', '--radius', '0.15']


def run(*argv):
    return main(['--no-log-files', *argv])


@pytest.fixture
def workdir(tmp_path, monkeypatch, plane_cloud):
    monkeypatch.chdir(tmp_path)
    write_cloud(plane_cloud, 'plane.csv')
    return tmp_path


def _manifest(path):
    with open(f"{path}.manifest.json") as f:
        return json.load(f)


class TestGenerate:
    def test_two_arms_is_reproducible(self, workdir):
        assert run('generate', 'two-arms', '--seed', '7', '-o', 'a.csv') == 0
        assert run('generate', 'two-arms', '--seed', '7', '-o', 'b.csv') == 0
        assert len(pd.read_csv('a.csv')) == 12_000
        assert file_digest('a.csv') == file_digest('b.csv')
        manifest = _manifest('a.csv')
        assert manifest['seed'] == 7
        assert manifest['notes']['labels'] == {'0': 8000, '1': 3000, '2': 1000}

    def test_default_output_name(self, workdir):
        assert run('generate', 'four-cylinders', '--seed', '2') == 0
        assert read_cloud('four-cylinders_seed2.csv').n == 9000


class TestDenoise:
    def test_writes_scores_and_manifest(self, workdir):
        assert run('denoise', 'plane.csv', *FAST, '-o', 'plane.ph.csv') == 0
        scores = read_scores('plane.ph.csv', 400)
        assert np.all(scores > 0)
        manifest = _manifest('plane.ph.csv')
        assert manifest['command'] == 'denoise'
        assert manifest['config']['epochs'] == 2
        assert 'plane.csv' in manifest['input_digests']
        assert manifest['output_digests']['plane.ph.csv'] == file_digest('plane.ph.csv')
        assert manifest['peak_memory_mb'] > 0

    def test_flags_override_config_file(self, workdir):
        (workdir / 'run.env').write_text("EPOCHS=5\nANTS=4\nKAPPA=0.3\n")
        assert run('denoise', 'plane.csv', '-c', 'run.env', '--epochs', '1', '--steps', '10',
                   '--radius', '0.15', '-o', 'out.csv') == 0
        config = _manifest('out.csv')['config']
        assert (config['epochs'], config['ants'], config['kappa']) == (1, 4, 0.3)

    def test_default_output_name(self, workdir):
        assert run('denoise', 'plane.csv', *FAST) == 0
        assert read_scores('plane.pheromone.csv').shape == (400,)

    def test_invalid_kappa(self, workdir):
        assert run('denoise', 'plane.csv', *FAST, '--kappa', '1.5') == 2

    def test_unknown_reward_attribute(self, workdir):
        assert run('denoise', 'plane.csv', *FAST, '--reward', 'temperature:+0.2') == 2

    def test_reward_run(self, workdir):
        assert run('denoise', 'plane.csv', *FAST, '--reward', 'density:+0.2', '-o', 'rw.csv') == 0
        assert _manifest('rw.csv')['config']['rewards'] == [{'attribute': 'density', 'sign': 1, 'weight': 0.2}]

    def test_missing_input(self, workdir):
        assert run('denoise', 'absent.csv', *FAST) == 3

    def test_snapshots(self, workdir):
        assert run('denoise', 'plane.csv', *FAST, '--snapshots', 'snaps', '-o', 's.csv') == 0
        assert sorted(p.name for p in (workdir / 'snaps').iterdir()) == ['epoch_0001.csv', 'epoch_0002.csv']
        np.testing.assert_array_equal(read_scores('snaps/epoch_0002.csv'), read_scores('s.csv'))

    def test_rerun_excluding(self, workdir):
        assert run('denoise', 'plane.csv', *FAST, '-o', 'first.csv') == 0
        first = read_scores('first.csv')
        threshold = float(np.quantile(first, 0.9))
        assert run('denoise', 'plane.csv', *FAST, '-o', 'first.csv', '--rerun-excluding', str(threshold)) == 0
        second = read_scores('first.rerun.csv', 400)
        assert np.all(second[first > threshold] == 0)
        assert np.all(second[first <= threshold] > 0)


class TestMarkovChain:
    @pytest.mark.parametrize("flavor", ["alignment", "distance"])
    def test_stationary_vector(self, workdir, flavor):
        assert run('mc', 'plane.csv', '--flavor', flavor, '--radius', '0.15', '-o', 'pi.csv') == 0
        pi = read_scores('pi.csv', 400)
        components = _manifest('pi.csv')['notes']['components']
        assert pi.sum() == pytest.approx(components, abs=1e-8)

    def test_iteration_budget(self, workdir):
        assert run('mc', 'plane.csv', '--radius', '0.15', '--max-iter', '1', '--no-refine', '-o', 'pi.csv') == 4

    def test_refinement_rescues_a_small_budget(self, workdir):
        assert run('mc', 'plane.csv', '--radius', '0.15', '--max-iter', '1', '-o', 'pi.csv') == 0
        assert _manifest('pi.csv')['notes']['residual'] <= 1e-10

    @pytest.mark.slow
    @pytest.mark.parametrize("flavor", ["alignment", "distance"])
    def test_two_arms_defaults(self, workdir, flavor):
        assert run('generate', 'two-arms', '--seed', '0', '-o', 'arms.csv') == 0
        assert run('mc', 'arms.csv', '--flavor', flavor, '--radius', '0.2', '--beta', '10', '-o', 'pi.csv') == 0
        notes = _manifest('pi.csv')['notes']
        assert notes['residual'] <= 1e-10
        assert read_scores('pi.csv', 12_000).sum() == pytest.approx(notes['components'], abs=1e-8)


class TestEvaluate:
    def test_sweep_on_labels(self, workdir, plane_cloud):
        write_scores(plane_cloud.labels.astype(float), 'truth.csv')
        assert run('evaluate', 'sweep', 'truth.csv', 'plane.csv', '-o', 'sweep.csv') == 0
        report = pd.read_csv('sweep.csv')
        assert report['ahd'].min() == 0.0
        assert _manifest('sweep.csv')['notes']['best_count'] == 300

    def test_length_mismatch(self, workdir):
        write_scores(np.ones(10), 'short.csv')
        assert run('evaluate', 'sweep', 'short.csv', 'plane.csv') == 3

    def test_pr_full_recall(self, workdir, plane_cloud):
        write_scores(plane_cloud.labels.astype(float), 'truth.csv')
        assert run('evaluate', 'pr', 'truth.csv', 'plane.csv', '--counts', '300,400',
                   '--positive-labels', '1', '-o', 'pr.csv') == 0
        report = pd.read_csv('pr.csv')
        assert report['recall'].tolist() == [1.0, 1.0]
        assert report['precision'].tolist() == [1.0, 0.75]

    @pytest.mark.parametrize("extra", [['--thresholds', '0.5,one'], ['--thresholds', '1,nan']])
    def test_bad_thresholds(self, workdir, plane_cloud, extra):
        write_scores(plane_cloud.labels.astype(float), 'truth.csv')
        assert run('evaluate', 'sweep', 'truth.csv', 'plane.csv', *extra) == 2

    @pytest.mark.parametrize("counts", ['0', '100,x', '1:400'])
    def test_bad_counts(self, workdir, plane_cloud, counts):
        write_scores(plane_cloud.labels.astype(float), 'truth.csv')
        assert run('evaluate', 'pr', 'truth.csv', 'plane.csv', '--counts', counts) == 2

    def test_calibrate_needs_twin(self, workdir, plane_cloud):
        write_scores(plane_cloud.labels.astype(float), 'truth.csv')
        assert run('evaluate', 'calibrate', 'truth.csv', 'plane.csv') == 2

    def test_calibrate(self, workdir, plane_cloud):
        write_scores(plane_cloud.labels.astype(float), 'truth.csv')
        assert run('evaluate', 'calibrate', 'truth.csv', 'plane.csv', '--calibration-scores', 'truth.csv',
                   '--calibration-cloud', 'plane.csv', '-o', 'cal.csv') == 0
        row = pd.read_csv('cal.csv').iloc[0]
        assert (row['threshold'], row['survivors'], row['ahd']) == (1.0, 300, 0.0)

    def test_convergence(self, workdir):
        assert run('denoise', 'plane.csv', *FAST, '--snapshots', 'snaps') == 0
        assert run('evaluate', 'convergence', 'snaps', 'plane.csv', '-o', 'conv.csv') == 0
        assert pd.read_csv('conv.csv')['epoch'].tolist() == [1, 2]


class TestReplay:
    def test_reproduces_outputs(self, workdir):
        assert run('denoise', 'plane.csv', *FAST, '--seed', '5', '-o', 'r.csv') == 0
        assert run('replay', 'r.csv.manifest.json') == 0

    def test_detects_changed_input(self, workdir, plane_cloud):
        assert run('denoise', 'plane.csv', *FAST, '-o', 'r.csv') == 0
        write_cloud(plane_cloud.subset(np.arange(399)), 'plane.csv')
        assert run('replay', 'r.csv.manifest.json') == 3


class TestArguments:
    def test_unknown_command(self):
        assert run('shuffle') == 2

    def test_logging_flags_are_not_recorded(self):
        argv = ['--log-dir', 'x', '--no-log-files', '--log-level=DEBUG', 'mc', 'in.csv']
        assert _recordable(argv) == ['mc', 'in.csv']
