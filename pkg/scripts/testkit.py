"""
Shared helpers for the test scripts: a runner for direct execution and a
tiny on-disk benchmark.
"""

import inspect
import sys
import tempfile
import traceback
from pathlib import Path
from typing import Dict

sys.path.insert(0, str(Path(__file__).parent.parent))

from app.schemas.dataset import BenchmarkConfig, SceneSpec
from app.services.datagen import DatasetService


def tiny_benchmark(root: Path, seed: int = 0) -> Dict[str, Path]:
    """A few 12x12 images per split; enough for pipeline plumbing tests."""
    config = BenchmarkConfig(
        num_source=4,
        num_target_train=3,
        num_target_eval=2,
        image_size=(12, 12),
        eval_image_size=(12, 12),
        seed=seed,
        scene=SceneSpec(image_size=(12, 12), min_shapes=2, max_shapes=4),
    )
    return DatasetService(root).generate_benchmark(config)


def run_tests(namespace: dict) -> None:
    """Run every test_* function of a module; tmp_path arguments get a fresh directory."""
    tests = [(name, fn) for name, fn in namespace.items() if name.startswith("test_") and callable(fn)]
    failed = 0
    for name, fn in tests:
        kwargs = {}
        if "tmp_path" in inspect.signature(fn).parameters:
            kwargs["tmp_path"] = Path(tempfile.mkdtemp(prefix=f"{name}_"))
        try:
            fn(**kwargs)
            print(f"✅ {name}")
        except Exception:
            failed += 1
            print(f"❌ {name}")
            traceback.print_exc()
    print("=" * 60)
    print(f"{len(tests) - failed}/{len(tests)} passed")
    if failed:
        sys.exit(1)
