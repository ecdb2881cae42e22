"""Base types shared by the data and model layers."""
