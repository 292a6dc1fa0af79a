"""K-Models clustering of time series under AR, ARMA and ARIMA models."""

__version__ = "0.1.0"
__description__ = "K-Models clustering of time series under AR/ARMA/ARIMA models."
__license__ = "MIT"
__author__ = "Serghei Iakovlev"
__author_email__ = "oss@serghei.pl"
__url__ = "https://github.com/sergeyklay/karma"
__copyright__ = f"Copyright (C) 2025-2026 {__author__}"
