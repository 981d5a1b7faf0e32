"""Locate a 360-degree panorama inside a colored point cloud.

Submodules: ``geometry`` (poses, projection, candidate grids), ``sampler``
(sampling loss and its gradient), ``optimizer`` (scheduled Adam),
``initializer`` (candidate filtering), ``pipeline`` (end-to-end search),
``render`` and ``synth`` (splat renderer, synthetic rooms), ``io`` and ``cli``.
"""

__version__ = "0.1.0"
