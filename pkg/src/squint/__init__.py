"""squint: a low-pass filter pipeline that reveals figures hidden in image
textures, plus the evaluation harness (manifests, prompts, metrics) and a
synthetic benchmark generator to measure the filter's benefit."""

from .imaging import (BadKernelSize, BorderMode, ChannelMismatch, ImageBuffer,
                      Kernel1D, Kernel2D, SHARPEN_KERNEL, box_blur, convolve,
                      gaussian_blur, highband_energy, make_gaussian_kernel,
                      median_blur, sharpen, to_grayscale)
from .pipeline import DEFAULT_FILTER, FilterConfig, lowpass_stages, reveal, validate_config
from .dataset import (LabelSet, Manifest, NO_ILLUSION, Prediction, SampleRecord,
                      builtin_labelsets, get_labelset, load_manifest,
                      normalize_char_answer, normalize_class_answer, save_manifest)
from .metrics import (ClassificationReport, ConfusionMatrix, MetricsReport,
                      SeqEvalReport, build_confusion, cer_corpus,
                      classification_report, coverage, levenshtein,
                      score_predictions, wer_corpus)
from .client import EndpointConfig, QueryResult, build_prompt, query_image, run_evaluation
from .synth import SynthSpec, benefit_study, generate_set, oracle_classify, template_bank

__version__ = "0.1.0"
