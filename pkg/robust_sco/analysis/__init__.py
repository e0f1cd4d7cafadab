# Analysis package initializer
