# Processors module
