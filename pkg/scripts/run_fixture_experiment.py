"""Run the full pipeline on the bundled fixture and print the metric tables.

    python scripts/run_fixture_experiment.py [--out /tmp/misinforank-fixture] [--seed 7]

The fixture is synthetic: numbers are a smoke test of the machinery, not a
claim about retrieval quality.
"""

import argparse
import json
import tempfile
from pathlib import Path

from misinforank.cli import PipelineConfig, run_pipeline, setup_logging

ROOT = Path(__file__).resolve().parent.parent
CONFIG = ROOT / "tests" / "fixtures" / "mini" / "config.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--log-level", default="WARNING")
    args = ap.parse_args()

    setup_logging(args.log_level.upper())
    cfg = PipelineConfig.load(args.config)
    cfg.output_dir = args.out or tempfile.mkdtemp(prefix="misinforank-")
    if args.seed is not None:
        cfg.seed = args.seed
    manifest = run_pipeline(cfg)
    out = Path(cfg.output_dir)

    print(f"output: {out}")
    print(f"credibility CV accuracy: {manifest['cv_accuracy']:.4f}")
    for group in ("total_recall", "adhoc"):
        eval_dir = out / "eval" / group
        if not eval_dir.exists():
            continue
        print(f"\n== {group}: mean per mapping id ==")
        print((eval_dir / "measures.tsv").read_text(), end="")
        if (eval_dir / "rprec.tsv").exists():
            print(f"\n== {group}: Rprec on binary.harmful, ascending ==")
            print((eval_dir / "rprec.tsv").read_text(), end="")

    mis = [json.loads(l) for l in (out / "scores" / "misinformation.jsonl").read_text().splitlines()]
    lexical = sum(r["source"] == "lexical" for r in mis)
    print(f"\nmisinformation scores: {len(mis)} pairs, {lexical} from the lexical fallback")


if __name__ == "__main__":
    main()
