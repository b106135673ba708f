"""Variant comparison and step timing helpers."""
from __future__ import annotations

import sys
import unittest
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from ctxgnn.config import TrainConfig
from ctxgnn.experiments import VARIANTS, VariantResult, compare_variants, summarize, time_train_steps
from ctxgnn.synth import EXPLORER, REPEATER, SynthConfig, generate_synthetic

CONFIG = TrainConfig(hidden_dim=4, fanouts=(3, 3), classes_C=20, batch_size=16, max_epochs=1, fusion_hidden=3)


class ExperimentTests(unittest.TestCase):
    def setUp(self) -> None:
        self.data = generate_synthetic(
            SynthConfig(
                num_users=20,
                num_items=30,
                num_train_interactions=200,
                repeat_prob=0.8,
                explorer_fraction=0.5,
                seed=2,
            )
        )

    def test_compare_variants_covers_every_variant(self) -> None:
        groups = {REPEATER: self.data.users_in(REPEATER), EXPLORER: self.data.users_in(EXPLORER)}
        results = compare_variants(self.data.graph, self.data.task, CONFIG, [0], groups)
        self.assertEqual({r.variant for r in results}, set(VARIANTS))
        for result in results:
            self.assertGreaterEqual(result.map, 0.0)
            self.assertLessEqual(result.map, 1.0)
            if result.variant == "pair_only" and result.group == EXPLORER:
                self.assertEqual(result.map, 0.0)
        overall = [r for r in results if r.group == "all"]
        self.assertEqual(len(overall), 3)

    def test_one_gnn_forward_per_seed_for_every_budget(self) -> None:
        rows = time_train_steps(self.data.graph, self.data.task, CONFIG, [20, 30, 500], steps=2)
        self.assertEqual([row["classes_C"] for row in rows], [20.0, 30.0, 30.0])
        for row in rows:
            self.assertEqual(row["gnn_seeds_per_step"], row["distinct_seeds"])
            self.assertGreater(row["seconds_per_step"], 0.0)

    def test_summarize_averages_over_seeds(self) -> None:
        results = [
            VariantResult("full", 0, "all", 10, 0.2),
            VariantResult("full", 1, "all", 10, 0.4),
            VariantResult("pair_only", 0, "all", 10, 0.1),
        ]
        summary = summarize(results)
        self.assertAlmostEqual(summary["full"]["all"], 0.3)
        self.assertAlmostEqual(summary["pair_only"]["all"], 0.1)


class MixedPopulationTests(unittest.TestCase):
    """Pure repeaters next to community explorers, small enough to train in seconds."""

    CONFIG = TrainConfig(
        hidden_dim=16,
        fanouts=(12, 6),
        classes_C=128,
        batch_size=32,
        max_epochs=20,
        patience=5,
        fusion_hidden=16,
    )

    def test_full_model_beats_both_ablations(self) -> None:
        data = generate_synthetic(
            SynthConfig(
                num_users=60,
                num_items=120,
                num_train_interactions=600,
                repeat_prob=1.0,
                community_count=6,
                community_affinity=1.0,
                explorer_fraction=0.5,
                eval_window_interactions=120,
                seed=3,
            )
        )
        groups = {REPEATER: data.users_in(REPEATER), EXPLORER: data.users_in(EXPLORER)}
        table = summarize(compare_variants(data.graph, data.task, self.CONFIG, [0, 1], groups))
        full, pair, tower = table["full"], table["pair_only"], table["tower_only"]

        self.assertGreaterEqual(full["all"], max(pair["all"], tower["all"]))
        self.assertLessEqual(pair[EXPLORER], 0.1 * pair[REPEATER])
        self.assertLessEqual(tower[REPEATER], pair[REPEATER])


if __name__ == "__main__":
    unittest.main()
