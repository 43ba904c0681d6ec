"""People-flow monitoring stack.

The package has three layers:

* acquisition: ``frames``, ``interpolate``, ``background``, ``segmentation``,
  ``pipeline`` (thermal image processing) and ``tracking`` (directional
  crossing detection), fed either by real frame dumps or by ``simulate``;
* coordination: ``coordinator`` (per-sensor ledgers, delta publication),
  ``broker`` (topic pub/sub server with interception), ``client``,
  ``occupancy`` and ``journal`` (durable occupancy accounting);
* presentation: ``registry`` (HTTP API for users, activities, devices)
  plus the TypeScript dashboard shipped separately under ``frontend/``.
"""

__version__ = "0.1.0"
