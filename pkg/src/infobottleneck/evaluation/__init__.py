from .curves import (CSV_COLUMNS, DEFAULT_METRICS, METRICS, CurveCell, CurveReport, MetricResult, assemble_curve,
                     curve_csv, dumps_records, higher_is_better, loads_records, pool, score_stimuli)
from .image import RandomProjectionImageEmbedder, cosine, embedding_cosine, pixel_correlation, ssim
from .representation import (FEATURE_NAMES, ClassProbeResult, ImageFeatureVector, RegressionProbeResult,
                             effective_dimensionality, feature_matrix, identification_accuracy,
                             identification_scores, image_features, probe_classification, probe_regression)
from .text import BagOfTokensEmbedder, bleu, edit_distance, meteor_alignment, meteor_simplified, wer
