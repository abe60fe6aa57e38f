import os
import unittest

from naquant.configuration import PipelineConfig, ReconstructionSettings, AcquisitionSettings, MetricsSettings, \
    TscSettings, PhantomSettings, ConfigurationError, read_configuration, read_configuration_text, \
    parse_configuration, write_configuration
from naquant.phantom import PriorMismatch, TUMOR, ADIPOSE, VIAL_77
from naquant.solvers import ReconMethod
from naquant.tests._common import TestWithConfiguration, TestWithTemporaryDirectory, create_test_configuration
from naquant.trajectories import TrajectoryMode

_EXAMPLE_SEED_VARIABLE = "NAQUANT_EXAMPLE_SEED"


class TestParseConfiguration(unittest.TestCase):
    """
    Tests for `parse_configuration`.
    """
    def test_defaults(self):
        configuration = parse_configuration({})
        self.assertEqual(1, configuration.n_subjects)
        self.assertEqual((8, 16, 32, 64), configuration.acquisition.spokes)
        self.assertEqual(30.0, configuration.acquisition.sigma)
        self.assertEqual((ReconMethod.ADC, ReconMethod.WTV, ReconMethod.DTV, ReconMethod.AGTV),
                         configuration.reconstruction.methods)
        self.assertEqual(11, configuration.metrics.ssim_window)

    def test_nested_values(self):
        configuration = parse_configuration({
            "master_seed": 7,
            "phantom": {"dims": [16, 24], "voxel_size_mm": [2, 3], "prior_mismatch": {"shift_mm": [1.0, 0.0]}},
            "acquisition": {"spokes": [4, 12], "mode": "density-adapted", "n_coils": 3},
            "reconstruction": {"methods": ["wTV", "AG-TV"], "alpha": 0.5, "gamma": 0.9},
            "tsc": {"regions": [TUMOR], "water_fraction": 0.8}
        })
        self.assertEqual(7, configuration.master_seed)
        self.assertEqual((16, 24), configuration.phantom.dims)
        self.assertEqual((2.0, 3.0), configuration.phantom.voxel_size_mm)
        self.assertEqual((32, 48), configuration.phantom.resolved_prior_dims)
        self.assertEqual((1.0, 0.0), configuration.phantom.prior_mismatch.shift_mm)
        self.assertEqual(TrajectoryMode.DENSITY_ADAPTED, configuration.acquisition.mode)
        self.assertEqual(3, configuration.acquisition.n_coils)
        self.assertEqual((ReconMethod.WTV, ReconMethod.AGTV), configuration.reconstruction.methods)
        self.assertEqual(0.5, configuration.reconstruction.parameters.alpha)
        self.assertEqual(0.9, configuration.reconstruction.parameters.gamma)
        self.assertEqual((TUMOR, ), configuration.tsc.regions)
        self.assertEqual(0.8, configuration.tsc.water_fraction)

    def test_unknown_top_level_key(self):
        with self.assertRaises(ConfigurationError) as context:
            parse_configuration({"subjects": 3})
        self.assertEqual("subjects", context.exception.key_path)

    def test_unknown_nested_key(self):
        with self.assertRaises(ConfigurationError) as context:
            parse_configuration({"reconstruction": {"alpha": 1.0, "beta": 2.0}})
        self.assertEqual("reconstruction.beta", context.exception.key_path)

    def test_section_is_not_mapping(self):
        with self.assertRaises(ConfigurationError) as context:
            parse_configuration({"acquisition": [8, 16]})
        self.assertEqual("acquisition", context.exception.key_path)

    def test_invalid_values(self):
        invalid = {
            "n_subjects": {"n_subjects": 0},
            "jobs": {"jobs": 0},
            "version": {"version": 2},
            "acquisition.spokes": {"acquisition": {"spokes": [8, 8]}},
            "acquisition.samples_per_spoke": {"acquisition": {"samples_per_spoke": 2}},
            "acquisition.k0_fraction": {"acquisition": {"k0_fraction": 0.75}},
            "acquisition.operator": {"acquisition": {"operator": "nufft"}},
            "reconstruction.methods": {"reconstruction": {"methods": []}},
            "metrics.ssim_window": {"metrics": {"ssim_window": 4}},
            "tsc.regions": {"tsc": {"regions": [VIAL_77]}},
            "tsc.water_fraction": {"tsc": {"water_fraction": 0.0}}
        }
        for key_path, raw in invalid.items():
            with self.subTest(key_path=key_path):
                with self.assertRaises(ConfigurationError) as context:
                    parse_configuration(raw)
                self.assertEqual(key_path, context.exception.key_path)

    def test_invalid_enum_value(self):
        self.assertRaises(ConfigurationError, parse_configuration, {"reconstruction": {"methods": ["FISTA"]}})
        self.assertRaises(ConfigurationError, parse_configuration, {"acquisition": {"mode": "spiral"}})

    def test_invalid_recon_parameter(self):
        with self.assertRaises(ConfigurationError) as context:
            parse_configuration({"reconstruction": {"alpha": -1.0}})
        self.assertEqual("reconstruction", context.exception.key_path)


class TestReadConfiguration(TestWithConfiguration):
    """
    Tests for `read_configuration` and `read_configuration_text`.
    """
    def test_read_written_file(self):
        configuration = create_test_configuration(
            "/output", n_subjects=3, render_panels=True,
            phantom=PhantomSettings((32, 32), 8.0, prior_mismatch=PriorMismatch(delete_tumor_edge=True)))
        read = read_configuration(self.configuration_to_file(configuration))
        self.assertEqual("/output", read.output_directory)
        self.assertEqual(3, read.n_subjects)
        self.assertTrue(read.render_panels)
        self.assertEqual(configuration.phantom.dims, read.phantom.dims)
        self.assertEqual(configuration.phantom.geometry, read.phantom.geometry)
        self.assertTrue(read.phantom.prior_mismatch.delete_tumor_edge)
        self.assertEqual(configuration.acquisition.spokes, read.acquisition.spokes)
        self.assertEqual(configuration.reconstruction.methods, read.reconstruction.methods)
        self.assertEqual(configuration.reconstruction.parameters, read.reconstruction.parameters)
        self.assertEqual(configuration.tsc.regions, read.tsc.regions)

    def test_with_template(self):
        os.environ[_EXAMPLE_SEED_VARIABLE] = "42"
        try:
            configuration = read_configuration_text("master_seed: {{ env['" + _EXAMPLE_SEED_VARIABLE + "'] }}\n")
        finally:
            del os.environ[_EXAMPLE_SEED_VARIABLE]
        self.assertEqual(42, configuration.master_seed)

    def test_relative_output_directory(self):
        configuration = read_configuration_text("output_directory: results\n", "/experiments")
        self.assertEqual("/experiments/results", configuration.output_directory)

    def test_relative_to_configuration_file(self):
        location = self.configuration_to_file(PipelineConfig(output_directory="results"))
        configuration = read_configuration(location)
        self.assertEqual(os.path.join(os.path.dirname(location), "results"), configuration.output_directory)

    def test_empty_text(self):
        configuration = read_configuration_text("", "/experiments")
        self.assertEqual(1, configuration.n_subjects)

    def test_invalid_yaml(self):
        self.assertRaises(ConfigurationError, read_configuration_text, "acquisition: [8, 16")

    def test_missing_file(self):
        self.assertRaises(ConfigurationError, read_configuration, "/does/not/exist.yml")


class TestWriteConfiguration(TestWithTemporaryDirectory):
    """
    Tests for `write_configuration`.
    """
    def test_write_then_read(self):
        configuration = PipelineConfig(
            output_directory=self.temp_directory, master_seed=3, jobs=2,
            acquisition=AcquisitionSettings((4, 8), samples_per_spoke=9, n_coils=1, sigma=0.0, operator="direct"),
            reconstruction=ReconstructionSettings((ReconMethod.TV, ), alpha=1.5, eta=0.2),
            metrics=MetricsSettings(ssim_window=7),
            tsc=TscSettings((ADIPOSE, TUMOR), erosion_voxels=2))
        location = os.path.join(self.temp_directory, "config.yml")
        write_configuration(configuration, location)
        read = read_configuration(location)
        self.assertEqual(self.temp_directory, read.output_directory)
        self.assertEqual(3, read.master_seed)
        self.assertEqual(2, read.jobs)
        self.assertEqual((4, 8), read.acquisition.spokes)
        self.assertEqual(9, read.acquisition.samples_per_spoke)
        self.assertEqual("direct", read.acquisition.operator)
        self.assertEqual(0.0, read.acquisition.sigma)
        self.assertEqual((ReconMethod.TV, ), read.reconstruction.methods)
        self.assertEqual(configuration.reconstruction.parameters, read.reconstruction.parameters)
        self.assertEqual(7, read.metrics.ssim_window)
        self.assertEqual(2, read.tsc.erosion_voxels)


if __name__ == "__main__":
    unittest.main()
