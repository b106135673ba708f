"""Split evaluation and the locality diagnostic."""
from __future__ import annotations

import sys
import unittest
from pathlib import Path

import numpy as np

PROJECT_ROOT = Path(__file__).resolve().parents[1]
TESTS_DIR = Path(__file__).resolve().parent
for path in (PROJECT_ROOT, TESTS_DIR):
    if str(path) not in sys.path:
        sys.path.insert(0, str(path))

from ctxgnn.config import TrainConfig
from ctxgnn.errors import InvalidConfig, NoEligibleUsers
from ctxgnn.evaluation import EvalReport, evaluate_split, locality_score
from ctxgnn.graph import TaskSpec
from ctxgnn.model import SHALLOW
from ctxgnn.sampler import local_item_set, sample_subgraph
from ctxgnn.synth import EXPLORER, SynthConfig, generate_synthetic
from fixtures import INTERACTS, make_model, toy_graph, user_item_graph


class LocalityTests(unittest.TestCase):
    def test_two_user_example(self) -> None:
        # user 0: two future items, one seen before; user 1: one future item, seen before
        history = [(0, 0, 1), (1, 2, 2), (2, 3, 3)]
        future = [(0, 0, 12), (0, 1, 13), (1, 2, 14)]
        graph = user_item_graph(3, 4, history + future)
        task = TaskSpec(target_edge_type=INTERACTS, interval=10, val_cutoff=10, test_cutoff=20)
        self.assertEqual(locality_score(graph, task, "val", 1), 0.75)

    def test_monotone_in_depth(self) -> None:
        for seed in range(8):
            data = generate_synthetic(
                SynthConfig(num_users=30, num_items=40, num_train_interactions=300, repeat_prob=0.3, seed=seed)
            )
            for split in ("val", "test"):
                scores = [locality_score(data.graph, data.task, split, k) for k in (1, 2, 3)]
                self.assertLessEqual(scores[0], scores[1])
                self.assertLessEqual(scores[1], scores[2])

    def test_pure_repeaters_are_fully_local(self) -> None:
        data = generate_synthetic(SynthConfig(num_users=20, num_items=50, num_train_interactions=200, repeat_prob=1.0))
        self.assertEqual(locality_score(data.graph, data.task, "test", 1), 1.0)

    def test_pure_explorers_are_never_local(self) -> None:
        data = generate_synthetic(
            SynthConfig(
                num_users=20, num_items=500, num_train_interactions=200, repeat_prob=0.0, community_affinity=0.0
            )
        )
        self.assertEqual(locality_score(data.graph, data.task, "test", 1), 0.0)

    def test_invalid_depth(self) -> None:
        graph, task = toy_graph()
        with self.assertRaises(InvalidConfig):
            locality_score(graph, task, "val", 4)

    def test_no_eligible_users(self) -> None:
        graph, task = toy_graph()
        with self.assertRaises(NoEligibleUsers):
            locality_score(graph, task, "val", 1, users=[])


class EvaluateSplitTests(unittest.TestCase):
    def setUp(self) -> None:
        self.graph, self.task = toy_graph()

    def test_report_fields(self) -> None:
        report = evaluate_split(self.graph, make_model(self.graph), self.task, "val", with_locality=True)
        self.assertIsInstance(report, EvalReport)
        self.assertEqual(report.users, 5)
        self.assertEqual(sorted(report.locality), [1, 2, 3])
        self.assertEqual(
            list(report.metrics())[:4], ["map@10", "ndcg@10", "hit_rate@10", "recall@10"]
        )
        self.assertIn("split=val", report.to_text())

    def test_deterministic(self) -> None:
        model = make_model(self.graph)
        first = evaluate_split(self.graph, model, self.task, "test")
        second = evaluate_split(self.graph, model, self.task, "test")
        self.assertEqual(first, second)

    def test_no_eligible_users(self) -> None:
        with self.assertRaises(NoEligibleUsers):
            evaluate_split(self.graph, make_model(self.graph), self.task, "test", users=[])

    def test_planted_tower_embeddings_rank_ground_truth_first(self) -> None:
        # user 1 first buys item 5 in the test window; item 5 is outside their subgraph
        model = make_model(self.graph, tower_only=True)
        sub = sample_subgraph(self.graph, 1, self.task.test_cutoff, model.config.fanouts)
        self.assertNotIn(5, local_item_set(sub))
        h_v = model.embed(sub, self.graph).h_v
        model.params.tensors[SHALLOW][5] = 1e3 * h_v / np.linalg.norm(h_v)
        report = evaluate_split(self.graph, model, self.task, "test", users=[1])
        self.assertEqual(report.map, 1.0)
        self.assertEqual(report.hit_rate, 1.0)

    def test_pair_only_cannot_reach_new_items(self) -> None:
        data = generate_synthetic(
            SynthConfig(num_users=15, num_items=60, num_train_interactions=150, explorer_fraction=1.0, seed=3)
        )
        self.assertEqual(len(data.users_in(EXPLORER)), 15)
        model = make_model(data.graph, pair_only=True)
        report = evaluate_split(data.graph, model, data.task, "test")
        self.assertEqual(report.map, 0.0)

    def test_inductive_evaluation_reads_no_shallow_rows(self) -> None:
        model = make_model(self.graph, item_encoder_mode="inductive_feature")
        evaluate_split(self.graph, model, self.task, "test")
        self.assertEqual(model.params.shallow_reads, 0)

    def test_batch_size_does_not_change_results(self) -> None:
        model = make_model(self.graph)
        small = evaluate_split(self.graph, model, self.task, "val", config=TrainConfig(eval_batch_size=1))
        large = evaluate_split(self.graph, model, self.task, "val", config=TrainConfig(eval_batch_size=64))
        np.testing.assert_allclose(small.map, large.map, rtol=1e-9)


if __name__ == "__main__":
    unittest.main()
