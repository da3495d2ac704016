//! Reaction mechanisms, Arrhenius kinetics, species production rates,
//! mixture properties, and the low-Mach equation of state.
//!
//! Mechanisms are plain-text files with a `[species]` table (name, molar
//! mass, formation enthalpy, specific heat), a `[reactions]` list of
//! irreversible elementary reactions (reversible pairs are written as two
//! lines), and an optional `[efficiencies]` section for third-body
//! collision partners. The grammar is documented in `docs/formats.md`.

use crate::error::{CoreError, Result};

/// Universal gas constant, J/(mol K).
pub const GAS_CONSTANT: f64 = 8.314462618;

/// Reference temperature for the linear enthalpy model, K.
pub const T_REF: f64 = 298.0;

#[derive(Debug, Clone)]
pub struct Species {
    pub name: String,
    /// kg/mol
    pub molar_mass: f64,
    /// Formation enthalpy at 298 K, J/kg.
    pub formation_enthalpy: f64,
    /// Constant specific heat, J/(kg K).
    pub specific_heat: f64,
}

/// Modified Arrhenius parameters: `k = a * T^b * exp(-e_a / (R T))`.
#[derive(Debug, Clone, Copy)]
pub struct Arrhenius {
    /// Pre-exponential factor; SI units consistent with mol/m^3
    /// concentrations and the reaction order.
    pub a: f64,
    pub b: f64,
    /// Activation energy, J/mol.
    pub e_a: f64,
}

#[derive(Debug, Clone)]
pub struct Reaction {
    /// (species index, stoichiometric coefficient) of the reactants.
    pub reactants: Vec<(usize, u32)>,
    pub products: Vec<(usize, u32)>,
    pub rate: Arrhenius,
    /// True when the collision partner M multiplies the rate.
    pub third_body: bool,
    /// The reaction equation as parsed, for reports.
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct Mechanism {
    pub species: Vec<Species>,
    pub reactions: Vec<Reaction>,
    /// Third-body collision efficiency per species (default 1).
    pub efficiencies: Vec<f64>,
}

impl Mechanism {
    pub fn n_species(&self) -> usize {
        self.species.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses and validates a mechanism. Validation enforces positive
    /// molar masses and heat capacities, known species in every reaction,
    /// a positive pre-exponential factor, and mass balance
    /// `sum nu' M = sum nu'' M` per reaction.
    pub fn parse(text: &str) -> Result<Self> {
        #[derive(PartialEq)]
        enum Section {
            None,
            Species,
            Reactions,
            Efficiencies,
        }
        let mut section = Section::None;
        let mut species: Vec<Species> = Vec::new();
        let mut raw_reactions: Vec<(usize, String)> = Vec::new();
        let mut raw_effs: Vec<(usize, String)> = Vec::new();

        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "[species]" => {
                    section = Section::Species;
                    continue;
                }
                "[reactions]" => {
                    section = Section::Reactions;
                    continue;
                }
                "[efficiencies]" => {
                    section = Section::Efficiencies;
                    continue;
                }
                _ if line.starts_with('[') => {
                    return Err(CoreError::MechanismParse {
                        line: line_no,
                        msg: format!("unknown section {line}"),
                    });
                }
                _ => {}
            }
            match section {
                Section::None => {
                    return Err(CoreError::MechanismParse {
                        line: line_no,
                        msg: "content before the first section header".into(),
                    })
                }
                Section::Species => {
                    let toks: Vec<&str> = line.split_whitespace().collect();
                    if toks.len() != 4 {
                        return Err(CoreError::MechanismParse {
                            line: line_no,
                            msg: format!(
                                "species line needs `name M h0 cp`, got {} fields",
                                toks.len()
                            ),
                        });
                    }
                    let num = |t: &str, what: &str| -> Result<f64> {
                        t.parse().map_err(|_| CoreError::MechanismParse {
                            line: line_no,
                            msg: format!("cannot parse {what} from {t:?}"),
                        })
                    };
                    let molar_mass = num(toks[1], "molar mass")?;
                    let specific_heat = num(toks[3], "specific heat")?;
                    if molar_mass <= 0.0 || specific_heat <= 0.0 {
                        return Err(CoreError::MechanismParse {
                            line: line_no,
                            msg: "molar mass and specific heat must be positive".into(),
                        });
                    }
                    if species.iter().any(|s| s.name == toks[0]) {
                        return Err(CoreError::MechanismParse {
                            line: line_no,
                            msg: format!("duplicate species {}", toks[0]),
                        });
                    }
                    species.push(Species {
                        name: toks[0].to_string(),
                        molar_mass,
                        formation_enthalpy: num(toks[2], "formation enthalpy")?,
                        specific_heat,
                    });
                }
                Section::Reactions => raw_reactions.push((line_no, line.to_string())),
                Section::Efficiencies => raw_effs.push((line_no, line.to_string())),
            }
        }
        if species.len() < 2 {
            return Err(CoreError::Chemistry(format!(
                "mechanism needs at least 2 species, found {}",
                species.len()
            )));
        }

        let mut mech = Mechanism {
            efficiencies: vec![1.0; species.len()],
            species,
            reactions: Vec::new(),
        };
        for (line_no, line) in raw_reactions {
            let rxn = parse_reaction(&mech, &line, line_no)?;
            mech.reactions.push(rxn);
        }
        for (line_no, line) in raw_effs {
            let (name, value) = line.split_once('=').ok_or(CoreError::MechanismParse {
                line: line_no,
                msg: "efficiency line needs `species = value`".into(),
            })?;
            let idx = mech
                .species_index(name.trim())
                .ok_or(CoreError::MechanismParse {
                    line: line_no,
                    msg: format!("unknown species {}", name.trim()),
                })?;
            mech.efficiencies[idx] =
                value.trim().parse().map_err(|_| CoreError::MechanismParse {
                    line: line_no,
                    msg: format!("cannot parse efficiency from {:?}", value.trim()),
                })?;
        }
        mech.validate()?;
        Ok(mech)
    }

    fn validate(&self) -> Result<()> {
        for rxn in &self.reactions {
            let side = |terms: &[(usize, u32)]| -> f64 {
                terms
                    .iter()
                    .map(|&(i, nu)| nu as f64 * self.species[i].molar_mass)
                    .sum()
            };
            let lhs = side(&rxn.reactants);
            let rhs = side(&rxn.products);
            if (lhs - rhs).abs() > 1e-12 * lhs.max(rhs) {
                return Err(CoreError::Chemistry(format!(
                    "reaction `{}` does not conserve mass: {lhs:.6e} vs {rhs:.6e} kg/mol",
                    rxn.label
                )));
            }
            if rxn.rate.a <= 0.0 {
                return Err(CoreError::Chemistry(format!(
                    "reaction `{}` has non-positive pre-exponential factor",
                    rxn.label
                )));
            }
        }
        Ok(())
    }
}

/// Parses `O3 + M -> O2 + O + M ; A ; b ; Ea`.
fn parse_reaction(mech: &Mechanism, line: &str, line_no: usize) -> Result<Reaction> {
    let parts: Vec<&str> = line.split(';').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(CoreError::MechanismParse {
            line: line_no,
            msg: format!(
                "reaction line needs `eqn ; A ; b ; Ea`, got {} parts",
                parts.len()
            ),
        });
    }
    let num = |t: &str, what: &str| -> Result<f64> {
        t.parse().map_err(|_| CoreError::MechanismParse {
            line: line_no,
            msg: format!("cannot parse {what} from {t:?}"),
        })
    };
    let rate = Arrhenius {
        a: num(parts[1], "pre-exponential factor")?,
        b: num(parts[2], "temperature exponent")?,
        e_a: num(parts[3], "activation energy")?,
    };
    let (lhs, rhs) = parts[0].split_once("->").ok_or(CoreError::MechanismParse {
        line: line_no,
        msg: "reaction equation needs `->`".into(),
    })?;
    let mut third_lhs = 0u32;
    let mut third_rhs = 0u32;
    let parse_side = |side: &str, third: &mut u32| -> Result<Vec<(usize, u32)>> {
        let mut out: Vec<(usize, u32)> = Vec::new();
        for term in side.split('+') {
            let term = term.trim();
            if term.is_empty() {
                return Err(CoreError::MechanismParse {
                    line: line_no,
                    msg: "empty term in reaction equation".into(),
                });
            }
            // Optional integer coefficient: `2 O2`.
            let (coef, name) = match term.split_once(char::is_whitespace) {
                Some((c, n)) if c.chars().all(|ch| ch.is_ascii_digit()) => {
                    (c.parse::<u32>().unwrap(), n.trim())
                }
                _ => (1, term),
            };
            if name == "M" {
                *third += coef;
                continue;
            }
            let idx = mech.species_index(name).ok_or(CoreError::MechanismParse {
                line: line_no,
                msg: format!("unknown species {name} in reaction"),
            })?;
            match out.iter_mut().find(|(i, _)| *i == idx) {
                Some((_, nu)) => *nu += coef,
                None => out.push((idx, coef)),
            }
        }
        Ok(out)
    };
    let reactants = parse_side(lhs, &mut third_lhs)?;
    let products = parse_side(rhs, &mut third_rhs)?;
    if third_lhs != third_rhs || third_lhs > 1 {
        return Err(CoreError::MechanismParse {
            line: line_no,
            msg: "third body M must appear exactly once on both sides or not at all".into(),
        });
    }
    Ok(Reaction {
        reactants,
        products,
        rate,
        third_body: third_lhs == 1,
        label: parts[0].to_string(),
    })
}

/// Modified Arrhenius rate constant `k = A T^b exp(-Ea/(R T))`.
pub fn arrhenius_rate(rate: &Arrhenius, temperature: f64) -> Result<f64> {
    if temperature <= 0.0 {
        return Err(CoreError::Chemistry(format!(
            "temperature must be positive, got {temperature} K"
        )));
    }
    Ok(rate.a * temperature.powf(rate.b) * (-rate.e_a / (GAS_CONSTANT * temperature)).exp())
}

/// Molar production rates and mass source terms of every species.
#[derive(Debug, Clone)]
pub struct ProductionRates {
    /// mol/(m^3 s)
    pub molar: Vec<f64>,
    /// `f_i = M_i wdot_i`, kg/(m^3 s)
    pub mass: Vec<f64>,
}

/// Mass-action kinetics over the full mass-fraction vector `w` (length
/// n_species, summing to 1 within 1e-8).
pub fn production_rates(
    mech: &Mechanism,
    temperature: f64,
    w: &[f64],
    density: f64,
) -> Result<ProductionRates> {
    check_mass_fractions(mech, w)?;
    // Molar concentrations c_i = rho w_i / M_i.
    let conc: Vec<f64> = w
        .iter()
        .zip(&mech.species)
        .map(|(&wi, s)| density * wi.max(0.0) / s.molar_mass)
        .collect();
    let c_third: f64 = conc
        .iter()
        .zip(&mech.efficiencies)
        .map(|(c, e)| c * e)
        .sum();
    let mut molar = vec![0.0f64; mech.n_species()];
    for rxn in &mech.reactions {
        let k = arrhenius_rate(&rxn.rate, temperature)?;
        let mut rate = k;
        for &(i, nu) in &rxn.reactants {
            rate *= conc[i].powi(nu as i32);
        }
        if rxn.third_body {
            rate *= c_third;
        }
        for &(i, nu) in &rxn.reactants {
            molar[i] -= nu as f64 * rate;
        }
        for &(i, nu) in &rxn.products {
            molar[i] += nu as f64 * rate;
        }
    }
    let mass = molar
        .iter()
        .zip(&mech.species)
        .map(|(&m, s)| m * s.molar_mass)
        .collect();
    Ok(ProductionRates { molar, mass })
}

/// Heat release `f_0 = -sum_i h_i(T) M_i wdot_i` in W/m^3, with the linear
/// enthalpy model `h_i(T) = h_i0 + cp_i (T - 298)`.
pub fn heat_release(mech: &Mechanism, temperature: f64, w: &[f64], density: f64) -> Result<f64> {
    let rates = production_rates(mech, temperature, w, density)?;
    Ok(heat_release_from(mech, temperature, &rates))
}

/// Heat release from precomputed production rates.
pub fn heat_release_from(mech: &Mechanism, temperature: f64, rates: &ProductionRates) -> f64 {
    -rates
        .mass
        .iter()
        .zip(&mech.species)
        .map(|(&f, s)| (s.formation_enthalpy + s.specific_heat * (temperature - T_REF)) * f)
        .sum::<f64>()
}

/// Harmonic mixture molar mass `(sum w_i / M_i)^-1` in kg/mol.
pub fn mixture_molar_mass(mech: &Mechanism, w: &[f64]) -> Result<f64> {
    check_mass_fractions(mech, w)?;
    let mut inv = 0.0;
    for (wi, s) in w.iter().zip(&mech.species) {
        if s.molar_mass <= 0.0 {
            return Err(CoreError::Chemistry(format!(
                "species {} has non-positive molar mass",
                s.name
            )));
        }
        inv += wi.max(0.0) / s.molar_mass;
    }
    Ok(1.0 / inv)
}

/// Low-Mach equation of state `rho = P_th Mbar / (R T)`.
pub fn density_eos(p_thermodynamic: f64, mixture_molar_mass: f64, temperature: f64) -> Result<f64> {
    if temperature <= 0.0 {
        return Err(CoreError::Chemistry(format!(
            "temperature must be positive, got {temperature} K"
        )));
    }
    Ok(p_thermodynamic * mixture_molar_mass / (GAS_CONSTANT * temperature))
}

/// Mass-fraction-weighted mixture heat capacity, J/(kg K).
pub fn mixture_cp(mech: &Mechanism, w: &[f64]) -> f64 {
    w.iter()
        .zip(&mech.species)
        .map(|(&wi, s)| wi.max(0.0) * s.specific_heat)
        .sum()
}

fn check_mass_fractions(mech: &Mechanism, w: &[f64]) -> Result<()> {
    if w.len() != mech.n_species() {
        return Err(CoreError::Chemistry(format!(
            "mass fraction vector has {} entries for {} species",
            w.len(),
            mech.n_species()
        )));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-8 {
        return Err(CoreError::Chemistry(format!(
            "mass fractions sum to {sum}, expected 1"
        )));
    }
    if let Some(wi) = w.iter().find(|&&wi| wi < -1e-8) {
        return Err(CoreError::Chemistry(format!(
            "negative mass fraction {wi}"
        )));
    }
    Ok(())
}
