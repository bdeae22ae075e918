"""nirattack: black-box search for binary body-segment patterns that hide
people from near-infrared person detectors.

The pipeline: labeled 3D human meshes are rasterized into per-pixel segment
maps, a K-bit pattern paints each segment saturated white or black, the
result is composited over real NIR backgrounds, and a genetic algorithm
evolves patterns to minimize the confidence a black-box detector reports.
"""

from .composite import NirImage, sample_background, synthesize_attack
from .detector import (Detection, HttpDetector, SyntheticDetector,
                       synthetic_confidence)
from .harness import ExperimentConfig, gen_dataset, make_baseline, run_experiment
from .mesh import (LabeledMesh, SegmentScheme, default_scheme, face_label,
                   load_mesh, load_scheme, make_mesh, save_mesh)
from .metrics import (EvalRecord, attack_success_rate, average_confidence,
                      detection_rate, image_confidence)
from .pattern import BinaryPattern, crossover, make_pattern, mutate, new_random
from .render import (BACKGROUND, CameraPose, PoseBounds, SegMap,
                     render_segmap, sample_camera)
from .search import (PopulationState, Scene, SearchConfig,
                     evaluate_population, evolve_generation, rank_scores,
                     run_search, select_next)

__version__ = "0.1.0"
