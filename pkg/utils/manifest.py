import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, Iterable, Optional, Union

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def sha256_file(path: Union[str, Path]) -> str:
    """Hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def _hashes(paths: Iterable[Union[str, Path]], root: Path) -> Dict[str, str]:
    hashes = {}
    for path in sorted(Path(p) for p in paths):
        try:
            key = str(path.resolve().relative_to(root.resolve()))
        except ValueError:
            key = str(path)
        hashes[key] = sha256_file(path)
    return hashes


def write_manifest(
    out: Union[str, Path],
    command: str,
    config: dict,
    outputs: Iterable[Union[str, Path]],
    inputs: Iterable[Union[str, Path]] = (),
    seed: Optional[int] = None,
) -> Path:
    """
    Record a run: command, config echo and hash, seed, and sha256 of every input and output.

    Output paths are stored relative to the output directory, so two runs with
    equal manifests wrote byte-identical artifacts.
    """
    out = Path(out)
    manifest = {
        "command": command,
        "config": json.loads(canonical_json(config)),
        "config_sha256": config_hash(config),
        "seed": seed,
        "inputs": _hashes(inputs, out),
        "outputs": _hashes(outputs, out),
    }
    path = out / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    logger.info("Wrote manifest with %d outputs to %s", len(manifest["outputs"]), path)
    return path
