# Privileged time-series estimators package