from .changes import ChangeSet
from .codec import parse_changeset, parse_map, serialize_changeset, serialize_map
from .diff import apply_changeset, diff_maps, invert_changeset
from .evaluate import EvalConfig, EvalReport, evaluate, gap_compare
from .model import EgoPose, LaneSegment, MapScene, PedestrianCrossing
from .priors import RuleBasedConfig, perturb_continuous, perturb_discrete, perturb_rulebased
