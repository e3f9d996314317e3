"""Audio-visual speech enhancement with conditional VAE speech priors.

A clean-speech generative model (audio-only, visual-only, or audio-visual)
is learned with a small numpy autodiff engine.  At test time it is combined
with an NMF noise model whose parameters are estimated by Monte Carlo EM,
and the speech is recovered with a posterior-averaged Wiener filter.
"""

__version__ = "0.1.0"
