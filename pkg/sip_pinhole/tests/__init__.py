"""
Tests package for sip_pinhole library.
"""
