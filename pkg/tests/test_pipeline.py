import numpy as np
import pytest

from moundcount.config import PipelineConfig
from moundcount.detection import OracleBackend, OracleBackendConfig, detect_block
from moundcount.errors import DataError, ValidationError
from moundcount.estimator import extract_features
from moundcount.evaluation import loocv_regressor
from moundcount.metrics import relative_precision
from moundcount.pipeline import (
    evaluate_runs,
    export_synthetic_fleet,
    read_manifest,
    run_manifest_entry,
)
from moundcount.simulator import FleetDistribution, generate_fleet


@pytest.fixture(scope="module")
def exported(tmp_path_factory):
    out = tmp_path_factory.mktemp("exported")
    fleet = generate_fleet(5, seed=11)
    manifest = export_synthetic_fleet(fleet, out, OracleBackendConfig(miss_rate=0.1, seed=1), PipelineConfig())
    return fleet, manifest


class TestEndToEnd:
    def test_perfect_oracle_held_out_within_five_percent(self):
        fleet = generate_fleet(10, FleetDistribution(invisible_fraction=(0.2, 0.2)), seed=2)
        vecs = [
            extract_features(b.meta, b.grid, detect_block(OracleBackend(b.annotations), b.grid, b.block_id),
                             b.ft_sample)
            for b in fleet
        ]
        preds = loocv_regressor(vecs, [b.gt_count for b in fleet])
        for p, b in zip(preds, fleet):
            assert abs(p.final_count - b.gt_count) / b.gt_count < 0.05

    def test_files_reproduce_in_memory_features(self, exported):
        fleet, manifest = exported
        cfg = PipelineConfig()
        for entry, block in zip(read_manifest(manifest), fleet):
            run = run_manifest_entry(entry, cfg, strict=True)
            dets = detect_block(OracleBackend(block.annotations, OracleBackendConfig(miss_rate=0.1, seed=1)),
                                block.grid, block.block_id)
            ref = extract_features(block.meta, block.grid, dets, block.ft_sample)
            assert run.features.det_count == ref.det_count
            assert run.features.ft_density == pytest.approx(ref.ft_density)
            assert run.gt_count == block.gt_count

    def test_evaluate_runs(self, exported):
        fleet, manifest = exported
        cfg = PipelineConfig()
        runs = [run_manifest_entry(e, cfg) for e in read_manifest(manifest)]
        cv, report = evaluate_runs(runs, cfg)
        assert len(cv.folds) == 5
        for b, block in zip(report.blocks, fleet):
            assert b.rp_detection == pytest.approx(relative_precision(b.det_count, block.gt_count))
            assert 0.8 < b.recall <= 1.0 and b.precision > 0.95


class TestManifest:
    def test_reports_every_problem(self, tmp_path):
        (tmp_path / "a.json").write_text("{}")
        (tmp_path / "m.csv").write_text(
            "block_id,sidecar,labels_dir\nA,a.json,nope\nB,missing.json,\nA,a.json,\n"
        )
        with pytest.raises(DataError) as exc:
            read_manifest(tmp_path / "m.csv")
        msg = str(exc.value)
        assert "A: labels_dir" in msg and "B: sidecar" in msg and "duplicate block ids: ['A']" in msg

    def test_missing_gt(self, exported):
        _, manifest = exported
        cfg = PipelineConfig()
        runs = [run_manifest_entry(e, cfg) for e in read_manifest(manifest)]
        runs[0].gt_count = None
        with pytest.raises(DataError):
            evaluate_runs(runs, cfg)


class TestConfig:
    def test_overrides_skip_none(self, tmp_path):
        (tmp_path / "c.json").write_text('{"lam": 3.0, "seed": 5}')
        cfg = PipelineConfig.from_sources(tmp_path / "c.json", lam=None, seed=9)
        assert (cfg.lam, cfg.seed) == (3.0, 9)

    def test_round_trip(self, tmp_path):
        cfg = PipelineConfig(z_range=(0.9, 1.1), intercept=True)
        cfg.write(tmp_path / "c.json")
        assert PipelineConfig.from_sources(tmp_path / "c.json") == cfg

    @pytest.mark.parametrize("kw", [{"edge_policy": "wrap"}, {"lam": -1}, {"iou_threshold": 0}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            PipelineConfig(**kw)

    def test_augmentation_defaults(self):
        aug = PipelineConfig(seed=4).augmentation()
        assert aug.seed == 4 and aug.z_range == (0.8, 1.2)
        np.testing.assert_allclose(aug.alpha_range, (0, 2 * np.pi))
