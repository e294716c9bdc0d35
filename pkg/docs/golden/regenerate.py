"""Regenerate the golden artifacts: ``python docs/golden/regenerate.py``."""

from pathlib import Path

from mvldp.cli import main

HERE = Path(__file__).resolve().parent

if __name__ == "__main__":
    for cfg in sorted(HERE.glob("*/config.toml")):
        out = cfg.parent / "artifacts"
        status = main([cfg.parent.name, "--config", str(cfg), "--out", str(out), "--quiet"])
        print(f"{cfg.parent.name}: exit {status}")
