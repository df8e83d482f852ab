from .errors import (TrajSynthError, UsageError, ParseError, ValidationError,
                     NumericError, UnreachableError, GenerationError)
from .geodata import (Extent, Road, StreetMap, Trajectory, Dataset, load_map,
                      save_map, load_trajectories, save_trajectories,
                      synth_map, synth_trajectories, spatial_split)
from .raster import (RasterGrid, rasterize_map, rasterize_trajectory,
                     image_to_trajectory, dihedral_transform)
from .mobility import MobilityConfig, generate_one, generate_batch
from .metrics import (edr, dtw, heatmap_from, cosine_sim, sliced_wasserstein,
                      evaluate_sets, SimilarityReport)
from .version import __version__
