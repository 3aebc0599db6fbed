import os
import sys
import tempfile
from pathlib import Path

from attnhar.models.config_models import DatasetSpec, ModelChoice, RunConfig, SynthConfig, TrainConfig, Variant
from attnhar.services import pipeline


def main():
    seed = int(os.environ.get("SEED", "7"))
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        synth = SynthConfig(num_sequences=60, seq_len=128, segment_len_min=16, segment_len_max=64)
        dataset = DatasetSpec(data_dir=root / "weak", synth=synth)

        pipeline.run_synthesis(RunConfig(command="synth", dataset=dataset, output_dir=root / "weak", train={"seed": seed}))

        run = RunConfig(
            command="train",
            dataset=dataset,
            model=ModelChoice(variant=Variant.ATT3),
            train=TrainConfig(epochs=2, batch_size=16, seed=seed),
            output_dir=root / "run",
        )
        metrics = pipeline.run_training(run)
        assert metrics.epochs_completed == 2, "training stopped early"
        assert (root / "run" / "checkpoint.json").is_file(), "no checkpoint written"

        located = pipeline.run_localization(
            run.model_copy(update={"command": "locate", "checkpoint": root / "run" / "checkpoint.json", "density_window": 8})
        )
        assert located.density is not None, "synthetic sequences should carry ground truth"
        assert located.sequences, "no test sequences were localized"

    print(f"Smoke OK: {metrics.model} accuracy {metrics.test_accuracy:.3f}, hit_rate {located.density.hit_rate:.3f}")


if __name__ == "__main__":
    try:
        main()
    except AssertionError as e:
        print(f"Assertion failed: {e}")
        sys.exit(1)
    except Exception as e:
        print(f"Error: {e}")
        sys.exit(2)
