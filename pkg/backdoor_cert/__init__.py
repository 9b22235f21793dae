# Backdoor Certification
# Certified robustness of a train-then-predict pipeline against backdoor
# attacks, using randomized smoothing with discrete noise.

__version__ = "1.0.0"
