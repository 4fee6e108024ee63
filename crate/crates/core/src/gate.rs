//! Unitary gate vocabulary shared by the tableau, the generalized stabilizer
//! engine, the circuit parser and the dense oracle.

use std::fmt;

use crate::pauli::Pauli;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    I,
    X,
    Y,
    Z,
    H,
    S,
    SDag,
    SqrtX,
    SqrtXDag,
    SqrtY,
    SqrtYDag,
    HXY,
    HNXY,
    HYZ,
    CX,
    CY,
    CZ,
    Swap,
    T,
    TDag,
}

impl Gate {
    pub const ALL: [Gate; 20] = [
        Gate::I,
        Gate::X,
        Gate::Y,
        Gate::Z,
        Gate::H,
        Gate::S,
        Gate::SDag,
        Gate::SqrtX,
        Gate::SqrtXDag,
        Gate::SqrtY,
        Gate::SqrtYDag,
        Gate::HXY,
        Gate::HNXY,
        Gate::HYZ,
        Gate::CX,
        Gate::CY,
        Gate::CZ,
        Gate::Swap,
        Gate::T,
        Gate::TDag,
    ];

    /// Canonical circuit-text name.
    pub fn name(self) -> &'static str {
        match self {
            Gate::I => "I",
            Gate::X => "X",
            Gate::Y => "Y",
            Gate::Z => "Z",
            Gate::H => "H",
            Gate::S => "S",
            Gate::SDag => "S_DAG",
            Gate::SqrtX => "SQRT_X",
            Gate::SqrtXDag => "SQRT_X_DAG",
            Gate::SqrtY => "SQRT_Y",
            Gate::SqrtYDag => "SQRT_Y_DAG",
            Gate::HXY => "H_XY",
            Gate::HNXY => "H_NXY",
            Gate::HYZ => "H_YZ",
            Gate::CX => "CX",
            Gate::CY => "CY",
            Gate::CZ => "CZ",
            Gate::Swap => "SWAP",
            Gate::T => "T",
            Gate::TDag => "T_DAG",
        }
    }

    /// Looks up a gate by name, accepting the usual aliases.
    pub fn from_name(name: &str) -> Option<Gate> {
        let g = match name {
            "CNOT" | "ZCX" => Gate::CX,
            "ZCY" => Gate::CY,
            "ZCZ" => Gate::CZ,
            "H_XZ" => Gate::H,
            "SQRT_Z" => Gate::S,
            "SQRT_Z_DAG" => Gate::SDag,
            _ => return Gate::ALL.iter().copied().find(|g| g.name() == name),
        };
        Some(g)
    }

    pub fn arity(self) -> usize {
        match self {
            Gate::CX | Gate::CY | Gate::CZ | Gate::Swap => 2,
            _ => 1,
        }
    }

    pub fn is_clifford(self) -> bool {
        !matches!(self, Gate::T | Gate::TDag)
    }

    pub fn is_pauli(self) -> bool {
        matches!(self, Gate::I | Gate::X | Gate::Y | Gate::Z)
    }

    /// For a single-qubit Clifford, the conjugation images `U X U†` and
    /// `U Z U†` as `(letter, negated)`.
    pub fn single_qubit_images(self) -> Option<[(Pauli, bool); 2]> {
        use Pauli::*;
        let imgs = match self {
            Gate::I => [(X, false), (Z, false)],
            Gate::X => [(X, false), (Z, true)],
            Gate::Y => [(X, true), (Z, true)],
            Gate::Z => [(X, true), (Z, false)],
            Gate::H => [(Z, false), (X, false)],
            Gate::S => [(Y, false), (Z, false)],
            Gate::SDag => [(Y, true), (Z, false)],
            Gate::SqrtX => [(X, false), (Y, true)],
            Gate::SqrtXDag => [(X, false), (Y, false)],
            Gate::SqrtY => [(Z, true), (X, false)],
            Gate::SqrtYDag => [(Z, false), (X, true)],
            Gate::HXY => [(Y, false), (Z, true)],
            Gate::HNXY => [(Y, true), (Z, true)],
            Gate::HYZ => [(X, true), (Y, false)],
            _ => return None,
        };
        Some(imgs)
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for g in Gate::ALL {
            assert_eq!(Gate::from_name(g.name()), Some(g));
        }
        assert_eq!(Gate::from_name("CNOT"), Some(Gate::CX));
        assert_eq!(Gate::from_name("FOO"), None);
    }

    #[test]
    fn clifford_tables_exist_for_single_qubit_cliffords() {
        for g in Gate::ALL {
            let expected = g.arity() == 1 && g.is_clifford();
            assert_eq!(g.single_qubit_images().is_some(), expected, "{g}");
        }
    }
}
