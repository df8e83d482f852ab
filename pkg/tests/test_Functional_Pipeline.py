import json
import os
import shutil
import tempfile

from unittest import TestCase, skipIf

from trajsynth.cli import main


@skipIf('TRAJSYNTH_FUNCTIONAL' not in os.environ.keys(), "Functional test")
class FunctionalPipeline(TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.mkdtemp()
        cls.code = main(['pipeline', '--seed', '1', '--count', '1000',
                         '--out', cls.tmp])
        with open(os.path.join(cls.tmp, 'report.json')) as f:
            cls.rows = json.load(f)['rows']

    @classmethod
    def tearDownClass(cls):
        shutil.rmtree(cls.tmp)

    def assertBetter(self, good, bad):
        a, b = self.rows[good], self.rows[bad]
        self.assertLess(a['edr_mean'], b['edr_mean'])
        self.assertLess(a['dtw_mean'], b['dtw_mean'])
        self.assertGreater(a['cosine'], b['cosine'])
        self.assertLess(a['sliced_wasserstein'], b['sliced_wasserstein'])

    def test_exit_code(self):
        self.assertEqual(self.code, 0)

    def test_map_restricted_rwp(self):
        self.assertBetter('mrwp', 'rwp')

    def test_map_restricted_gm(self):
        self.assertBetter('mgm', 'gm')

    def test_reference_row(self):
        self.assertGreater(self.rows['reference']['cosine'],
                           self.rows['rwp']['cosine'])
