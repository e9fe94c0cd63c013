"""FMCW radar micro-Doppler pedestrian recognition.

Modules:

* :mod:`demcl.radarproc`: frames to range-Doppler maps and time-Doppler spectrograms
* :mod:`demcl.features`: gait features f1 to f4
* :mod:`demcl.nn`: the numpy neural-network engine
* :mod:`demcl.rdgan`: next-frame GAN used for data enhancement
* :mod:`demcl.mcl`: multi-characteristic fusion classifier
* :mod:`demcl.simkit`: point-scatterer pedestrian simulator
* :mod:`demcl.pipeline` and :mod:`demcl.cli`: end-to-end runs
"""

__version__ = "0.1.0"
