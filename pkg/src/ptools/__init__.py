"""Task-driven tool affordance scoring from point clouds.

Fits superquadric primitives to a household-tool cloud, abstracts it
into 25-parameter p-tools, scores candidates with a learned task
function, and returns a graded affordance score, a grasp region, and a
tool pose.
"""

from .evaluation import (
    DatasetManifest,
    EvalReport,
    accuracy_per_category,
    build_report,
    metric1,
    random_baseline,
)
from .fitting import FitDivergence, FitOptions, FitResult, fit_best, fit_variant
from .pipeline import learn_task_function
from .pointcloud import (
    BoundingBox,
    PlyParseError,
    PointCloud,
    cut_sphere,
    downsample,
    merge_small_segments,
    read_ply,
    select_segmentation,
    symmetric_distance,
    write_ply,
)
from .projection import ProjectionConfig, ProjectionResult, plant_seeds, project
from .ptool import (
    PTool,
    PToolFeatures,
    ToolPose,
    extract_ptools,
    features,
    pose_for_task,
    render,
)
from .superquadric import (
    SuperquadricKind,
    SuperquadricParams,
    deform,
    inside_outside,
    mass_properties,
    sample_surface,
)
from .taskfn import (
    LabeledSet,
    TaskFunctionModel,
    balance,
    importance,
    interpolation_sample,
    predict,
    predict_batch,
    train,
    train_with_pruning,
)
from .tasks import (
    TaskSpec,
    calibrate_thresholds,
    categorize,
    load_default_task,
    oracle_score,
    score_tool,
)

__version__ = "0.1.0"
