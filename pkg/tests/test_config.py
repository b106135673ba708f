"""Training config parsing and validation."""
from __future__ import annotations

import sys
import unittest
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[1]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from ctxgnn.config import DEFAULT_FANOUT, TrainConfig, config_from_dict, config_to_dict, dump_config, parse_config_text
from ctxgnn.errors import InvalidConfig


class ParseConfigTests(unittest.TestCase):
    def test_num_layers_alone_repeats_default_fanout(self) -> None:
        config = parse_config_text("num_layers=3\n")
        self.assertEqual(config.num_layers, 3)
        self.assertEqual(config.fanouts, (DEFAULT_FANOUT,) * 3)

    def test_fanouts_alone_set_num_layers(self) -> None:
        config = parse_config_text("fanouts = 5,4,3  # three hops\n")
        self.assertEqual((config.num_layers, config.fanouts), (3, (5, 4, 3)))

    def test_explicit_mismatch_is_rejected(self) -> None:
        with self.assertRaises(InvalidConfig):
            parse_config_text("num_layers=2\nfanouts=5\n")

    def test_zero_layers_rejected(self) -> None:
        with self.assertRaises(InvalidConfig):
            parse_config_text("num_layers=0\n")

    def test_unknown_key_and_bad_value(self) -> None:
        with self.assertRaises(InvalidConfig):
            parse_config_text("depth=2\n")
        with self.assertRaises(InvalidConfig):
            parse_config_text("pair_only=maybe\n")

    def test_dump_parses_back(self) -> None:
        config = TrainConfig(hidden_dim=8, fanouts=(4, 2), pair_only=True, lr=0.005)
        self.assertEqual(parse_config_text(dump_config(config)), config)
        self.assertEqual(config_from_dict(config_to_dict(config)), config)


if __name__ == "__main__":
    unittest.main()
