PACKAGE_NAME = "naquant"
VERSION = "1.0.0"
DESCRIPTION = "Simulates radial sodium MRI of breast phantoms, reconstructs it with prior-guided total variation " \
              "and quantifies tissue sodium concentration"
EXECUTABLE_NAME = "naquant"
