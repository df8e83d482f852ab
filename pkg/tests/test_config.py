import json
import os
import shutil
import tempfile

from unittest import TestCase
from unittest.mock import patch

from trajsynth.config import MANIFEST_NAME, RunConfig, from_dict, \
    default_point_interval, default_threads, load_config, resolve
from trajsynth.errors import ParseError, ValidationError
from trajsynth.mobility import MobilityConfig
from trajsynth.version import __version__


class TestDefaults(TestCase):

    @patch.dict(os.environ, {'TRAJSYNTH_THREADS': '3'})
    def test_threads_from_env(self):
        self.assertEqual(default_threads(), 3)

    @patch('trajsynth.config.os.cpu_count', return_value=6)
    @patch.dict(os.environ, {'TRAJSYNTH_THREADS': ''})
    def test_threads_default(self, cpu_count):
        self.assertEqual(default_threads(), 6)

    @patch.dict(os.environ, {'TRAJSYNTH_THREADS': 'many'})
    def test_threads_bad_env(self):
        with self.assertRaises(ValidationError):
            default_threads()

    @patch.dict(os.environ, {'TRAJSYNTH_POINT_INTERVAL': '2.5'})
    def test_point_interval_from_env(self):
        self.assertEqual(default_point_interval(), 2.5)

    @patch.dict(os.environ, {'TRAJSYNTH_POINT_INTERVAL': ''})
    def test_point_interval_default(self):
        self.assertEqual(default_point_interval(), 1.0)


class TestResolve(TestCase):

    def test_precedence(self):
        defaults = {'a': 1, 'b': 2, 'c': 3}
        result = resolve(defaults, {'a': 10, 'b': 20}, {'a': 100, 'c': None})

        self.assertEqual(result, {'a': 100, 'b': 20, 'c': 3})

    def test_unknown_key(self):
        with self.assertRaises(ValidationError):
            resolve({'a': 1}, {'z': 2})

    def test_from_dict_ignores_extra(self):
        cfg = from_dict(MobilityConfig, {'model': 'gm', 'gm_alpha': 0.5,
                                         'count': 12})

        self.assertEqual(cfg.model, 'gm')
        self.assertEqual(cfg.gm_alpha, 0.5)


class TestConfigFiles(TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_load_plain(self):
        path = os.path.join(self.tmp, 'cfg.json')
        with open(path, 'w') as f:
            json.dump({'count': 5}, f)

        self.assertEqual(load_config(path), {'count': 5})

    def test_load_missing(self):
        with self.assertRaises(ParseError):
            load_config(os.path.join(self.tmp, 'absent.json'))

    def test_load_not_object(self):
        path = os.path.join(self.tmp, 'cfg.json')
        with open(path, 'w') as f:
            f.write('[1, 2]')

        with self.assertRaises(ParseError):
            load_config(path)

    def test_manifest_replay(self):
        run = RunConfig('gen-map', 7, 2, self.tmp, {'side': 80.0})
        path = run.write_manifest(self.tmp)

        self.assertEqual(os.path.basename(path), MANIFEST_NAME)
        with open(path) as f:
            manifest = json.load(f)
        self.assertEqual(manifest['version'], __version__)
        self.assertEqual(load_config(path),
                         {'side': 80.0, 'seed': 7, 'threads': 2})

    def test_manifest_is_stable(self):
        run = RunConfig('gen-map', 7, 2, self.tmp, {'b': 1, 'a': 2})
        path = run.write_manifest(self.tmp)
        with open(path, 'rb') as f:
            first = f.read()
        run.write_manifest(self.tmp)
        with open(path, 'rb') as f:
            self.assertEqual(f.read(), first)
