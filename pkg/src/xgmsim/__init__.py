"""Online SGD and order-parameter dynamics for the XOR-like Gaussian mixture."""

from .dynamics import OdeConfig, RateEval, TrajectoryRecord, integrate, ode_step, rate_eval
from .finite_net import (FiniteNet, SgdConfig, cross_entropy, forward, init_net,
                         loss, measure_order_params, sgd_step, sigmoid)
from .metrics import (CoverageReport, TransitionMatrix, coverage, destabilisation,
                      population_loss, relevant_norms, zero_noise_error)
from .mixture import (CLUSTERS, ClusterId, FieldMoments, MixtureSpec, Sample,
                      field_moments, sample_batch, sample_input)
from .moments import ExpectationSet, FactorizedCovariance, estimate_expectations, factorize
from .schedule import (CHANNELS, CURRICULUM, CURRICULUM_DISCRETE, FADING_CHANNEL,
                       KINDS, NO_FADING, NOISE_CHANNEL, RANDOM_ORDER, Schedule,
                       make_schedule, multiset_check)
from .state import (GRAM_JITTER, NeuronGeometry, NonRealisableState, OrderState,
                    aligned_state_with_free_neuron, controlled_init, embed_state,
                    neuron_geometry, random_init)

__version__ = "0.1.0"
