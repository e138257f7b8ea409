//! Seeded synthetic housing data with a known, nonlinear log-price function.
//!
//! Column set and marginals follow a citywide single-family/condo market of
//! roughly a thousand sales. Log price is generated as
//!
//! ```text
//! ln(price) = intercept
//!           + elasticity[region] * ln(living_area / 2000)   (area x region interaction)
//!           + region_shift[region]
//!           - cbd_drop * (1 - exp(-drive_to_cbd / cbd_scale))
//!           + age_amplitude * ((age - age_trough) / age_scale)^2  (U-shape)
//!           + historic_premium * [region = Central and age >= historic_age]
//!           + crime_shift[crime] + type_shift[type] + school_shift[e_rank]
//!           + full_bath_coef * full_baths
//!           + N(0, noise_std)
//! ```
//!
//! The coefficients travel with the data as a [`GroundTruth`] so tests can
//! evaluate the noiseless surface directly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Cell, ColumnData, ColumnRole, ColumnSchema, Dataset, Schema};
use crate::error::{Error, Result};

pub const PRICE: &str = "House Price";
pub const ID: &str = "Property ID";
pub const LOT_AREA: &str = "Lot Area";
pub const LIVING_AREA: &str = "Living Area";
pub const AGE: &str = "Age";
pub const FULL_BATHS: &str = "Number of Full Bathrooms";
pub const HALF_BATHS: &str = "Number of Half Bathrooms";
pub const THREE_QUARTER_BATHS: &str = "Number of 3/4 Bathrooms";
pub const PARKING: &str = "Parking";
pub const HOA_FEES: &str = "HOA Fees";
pub const DRIVE_TO_CBD: &str = "Drive to CBD";
pub const WALK_E_SCHOOL: &str = "Walk to E.School";
pub const WALK_M_SCHOOL: &str = "Walk to M.School";
pub const WALK_H_SCHOOL: &str = "Walk to H.School";
pub const MARRIED: &str = "Married";
pub const INCOME: &str = "Median Household Inc.";
pub const POPULATION: &str = "Neighborhood's Population";
pub const POOL: &str = "Pool, Bath tub, Sauna, or Jacuzzi";
pub const SOLAR: &str = "Solar Power";
pub const E_RANK: &str = "Nearest E.School Rank";
pub const M_RANK: &str = "Nearest M.School Rank";
pub const H_RANK: &str = "Nearest H.School Rank";
pub const REGION: &str = "Region";
pub const BEDROOMS: &str = "Number of Bedrooms";
pub const PROPERTY_TYPE: &str = "Property Type";
pub const CRIME: &str = "Neighborhood's Crime Level";

pub const REGIONS: [&str; 6] = ["Central", "North", "South", "East", "Gunbarrel", "Rural"];
pub const REGION_MARGINALS: [f64; 6] = [0.2259, 0.2338, 0.1405, 0.1965, 0.1228, 0.0806];
pub const BEDROOM_LEVELS: [&str; 8] = ["0", "1", "2", "3", "4", "5", "6", "7"];
pub const BEDROOM_MARGINALS: [f64; 8] = [0.0029, 0.0707, 0.2485, 0.2800, 0.2446, 0.1248, 0.0265, 0.0020];
pub const PROPERTY_TYPES: [&str; 3] = ["Condominium", "Town-Home", "Single Family"];
// 0.3183 is an observed share, not 1/π
#[allow(clippy::approx_constant)]
pub const PROPERTY_TYPE_MARGINALS: [f64; 3] = [0.3183, 0.0884, 0.5933];
/// Lowest crime first so it is the reference level.
pub const CRIME_LEVELS: [&str; 3] = ["Low", "Middle", "High"];
pub const CRIME_MARGINALS: [f64; 3] = [0.4234, 0.4961, 0.0806];
pub const RANKS: [&str; 3] = ["A", "B", "C"];
pub const E_RANK_MARGINALS: [f64; 3] = [0.3281, 0.5383, 0.1336];
pub const M_RANK_MARGINALS: [f64; 3] = [0.1228, 0.6218, 0.2554];
pub const POOL_RATE: f64 = 0.3536;
pub const SOLAR_RATE: f64 = 0.2888;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian noise on log price.
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    /// Probability that a Lot Area, Solar Power or Pool cell is blanked.
    #[serde(default = "default_missing")]
    pub missing_rate: f64,
    /// Probability of an upper-tail multiplicative shock on Lot Area.
    #[serde(default = "default_outlier")]
    pub outlier_rate: f64,
}

fn default_noise() -> f64 {
    0.2
}
fn default_missing() -> f64 {
    0.02
}
fn default_outlier() -> f64 {
    0.03
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 1018,
            seed: 2019,
            noise_std: default_noise(),
            missing_rate: default_missing(),
            outlier_rate: default_outlier(),
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 50 {
            return Err(Error::Config(format!("generator needs n >= 50, got {}", self.n)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        for (name, r) in [("missing_rate", self.missing_rate), ("outlier_rate", self.outlier_rate)] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {r}")));
            }
        }
        Ok(())
    }
}

/// Coefficients of the noiseless log-price surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub intercept: f64,
    /// Log-living-area elasticity per region (schema level order).
    pub elasticity: [f64; 6],
    pub region_shift: [f64; 6],
    pub cbd_drop: f64,
    pub cbd_scale: f64,
    pub age_amplitude: f64,
    pub age_trough: f64,
    pub age_scale: f64,
    /// Step premium for old homes in the central region.
    pub historic_premium: f64,
    pub historic_age: f64,
    pub crime_shift: [f64; 3],
    pub type_shift: [f64; 3],
    pub school_shift: [f64; 3],
    pub full_bath_coef: f64,
}

impl Default for GroundTruth {
    fn default() -> Self {
        GroundTruth {
            intercept: 13.55,
            elasticity: [1.0, 0.75, 0.7, 0.55, 0.5, 0.3],
            region_shift: [0.0, -0.30, -0.30, -0.44, -0.43, -0.64],
            cbd_drop: 0.9,
            cbd_scale: 6.0,
            age_amplitude: 0.35,
            age_trough: 50.0,
            age_scale: 30.0,
            historic_premium: 0.25,
            historic_age: 70.0,
            crime_shift: [0.0, -0.06, -0.20],
            type_shift: [0.0, -0.05, 0.10],
            school_shift: [0.0, -0.06, -0.36],
            full_bath_coef: 0.08,
        }
    }
}

/// Inputs of the ground-truth surface for one property.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthInputs {
    pub living_area: f64,
    pub drive_to_cbd: f64,
    pub age: f64,
    pub full_baths: f64,
    pub region: usize,
    pub crime: usize,
    pub property_type: usize,
    pub e_rank: usize,
}

impl GroundTruth {
    pub fn age_effect(&self, age: f64) -> f64 {
        let z = (age - self.age_trough) / self.age_scale;
        self.age_amplitude * z * z
    }

    pub fn cbd_effect(&self, drive: f64) -> f64 {
        -self.cbd_drop * (1.0 - (-drive / self.cbd_scale).exp())
    }

    pub fn log_price(&self, x: &TruthInputs) -> f64 {
        self.intercept
            + self.elasticity[x.region] * (x.living_area / 2000.0).ln()
            + self.region_shift[x.region]
            + self.cbd_effect(x.drive_to_cbd)
            + self.age_effect(x.age)
            + if x.region == 0 && x.age >= self.historic_age { self.historic_premium } else { 0.0 }
            + self.crime_shift[x.crime]
            + self.type_shift[x.property_type]
            + self.school_shift[x.e_rank]
            + self.full_bath_coef * x.full_baths
    }

    /// Reads the surface inputs from row `row` of a generated dataset.
    pub fn inputs_at(ds: &Dataset, row: usize) -> Result<TruthInputs> {
        let num = |name: &str| match ds.schema().index_of(name).map(|c| ds.cell(row, c)) {
            Some(Cell::Number(x)) => Ok(x),
            _ => Err(Error::Data(format!("row {row}: '{name}' missing or not numeric"))),
        };
        let lvl = |name: &str| match ds.schema().index_of(name).map(|c| ds.cell(row, c)) {
            Some(Cell::Level(l)) => Ok(l),
            _ => Err(Error::Data(format!("row {row}: '{name}' missing or not categorical"))),
        };
        Ok(TruthInputs {
            living_area: num(LIVING_AREA)?,
            drive_to_cbd: num(DRIVE_TO_CBD)?,
            age: num(AGE)?,
            full_baths: num(FULL_BATHS)?,
            region: lvl(REGION)?,
            crime: lvl(CRIME)?,
            property_type: lvl(PROPERTY_TYPE)?,
            e_rank: lvl(E_RANK)?,
        })
    }

    pub fn log_price_at(&self, ds: &Dataset, row: usize) -> Result<f64> {
        Ok(self.log_price(&Self::inputs_at(ds, row)?))
    }
}

/// Generator output: the dataset, its noiseless log prices and the surface.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: GroundTruth,
    /// Noise-free log price per row.
    pub clean_log_price: Vec<f64>,
    pub config: GeneratorConfig,
}

/// Descriptor written next to a synthetic CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthDescriptor {
    pub config: GeneratorConfig,
    pub ground_truth: GroundTruth,
    pub formula: String,
}

impl SyntheticData {
    pub fn descriptor(&self) -> TruthDescriptor {
        TruthDescriptor {
            config: self.config.clone(),
            ground_truth: self.truth.clone(),
            formula: "ln(price) = intercept + elasticity[region]*ln(living_area/2000) + region_shift[region] \
                      - cbd_drop*(1-exp(-drive_to_cbd/cbd_scale)) + age_amplitude*((age-age_trough)/age_scale)^2 \
                      + historic_premium*[region=Central and age>=historic_age] \
                      + crime_shift[crime] + type_shift[property_type] + school_shift[e_rank] \
                      + full_bath_coef*full_baths + N(0, noise_std)"
                .to_string(),
        }
    }
}

pub fn housing_schema() -> Schema {
    use ColumnRole::*;
    let mut e = ColumnSchema::categorical(E_RANK, &RANKS);
    e.units = "A best".into();
    Schema::new(vec![
        ColumnSchema::numeric(ID, Identifier, ""),
        ColumnSchema::numeric(PRICE, Target, "USD"),
        ColumnSchema::numeric(LOT_AREA, Feature, "SqFt"),
        ColumnSchema::numeric(LIVING_AREA, Feature, "SqFt"),
        ColumnSchema::numeric(AGE, Feature, "years"),
        ColumnSchema::numeric(FULL_BATHS, Feature, "count"),
        ColumnSchema::numeric(HALF_BATHS, Feature, "count"),
        ColumnSchema::numeric(THREE_QUARTER_BATHS, Feature, "count"),
        ColumnSchema::numeric(PARKING, Feature, "spaces"),
        ColumnSchema::numeric(HOA_FEES, Feature, "USD per year"),
        ColumnSchema::numeric(DRIVE_TO_CBD, Feature, "minutes"),
        ColumnSchema::numeric(WALK_E_SCHOOL, Feature, "minutes"),
        ColumnSchema::numeric(WALK_M_SCHOOL, Feature, "minutes"),
        ColumnSchema::numeric(WALK_H_SCHOOL, Feature, "minutes"),
        ColumnSchema::numeric(MARRIED, Feature, "percent"),
        ColumnSchema::numeric(INCOME, Feature, "USD"),
        ColumnSchema::numeric(POPULATION, Feature, "people"),
        ColumnSchema::binary(POOL),
        ColumnSchema::binary(SOLAR),
        e,
        ColumnSchema::categorical(M_RANK, &RANKS),
        ColumnSchema::categorical(H_RANK, &RANKS),
        ColumnSchema::categorical(REGION, &REGIONS),
        ColumnSchema::categorical(BEDROOMS, &BEDROOM_LEVELS),
        ColumnSchema::categorical(PROPERTY_TYPE, &PROPERTY_TYPES),
        ColumnSchema::categorical(CRIME, &CRIME_LEVELS),
    ])
    .expect("static schema is valid")
}

fn draw_level<R: Rng>(rng: &mut R, marginals: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>() * marginals.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, p) in marginals.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    marginals.len() - 1
}

fn clamp_round(x: f64, lo: f64, hi: f64) -> f64 {
    x.round().clamp(lo, hi)
}

/// Generates a synthetic housing dataset. Pure function of the config.
pub fn generate(cfg: &GeneratorConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let truth = GroundTruth::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let age_beta = Beta::<f64>::new(2.0, 2.5).expect("valid beta");
    let area_noise = LogNormal::new(0.0, 0.22).expect("valid lognormal");
    let lot_dist = LogNormal::<f64>::new(8.8, 0.6).expect("valid lognormal");

    // (lo, hi) drive-to-CBD minutes per region
    const DRIVE: [(f64, f64); 6] = [(1.0, 12.0), (2.0, 17.0), (2.0, 18.0), (4.0, 20.0), (9.0, 24.0), (11.0, 26.0)];
    const INCOME_BY_REGION: [f64; 6] = [52_000.0, 66_000.0, 63_000.0, 58_000.0, 74_000.0, 70_000.0];
    const MARRIED_BY_REGION: [f64; 6] = [28.0, 46.0, 45.0, 40.0, 58.0, 55.0];
    const POP_BY_REGION: [f64; 6] = [85_000.0, 40_000.0, 35_000.0, 45_000.0, 12_000.0, 4_000.0];

    let n = cfg.n;
    let mut cols: Vec<Vec<Option<f64>>> = (0..19).map(|_| Vec::with_capacity(n)).collect();
    let mut cats: Vec<Vec<Option<usize>>> = (0..7).map(|_| Vec::with_capacity(n)).collect();
    let mut clean = Vec::with_capacity(n);
    let mut prices = Vec::with_capacity(n);

    for i in 0..n {
        let region = draw_level(&mut rng, &REGION_MARGINALS);
        let ptype = draw_level(&mut rng, &PROPERTY_TYPE_MARGINALS);
        let bedrooms = draw_level(&mut rng, &BEDROOM_MARGINALS);
        let crime = draw_level(&mut rng, &CRIME_MARGINALS);
        let e_rank = draw_level(&mut rng, &E_RANK_MARGINALS);
        let m_rank = draw_level(&mut rng, &M_RANK_MARGINALS);

        let type_factor = [0.78, 0.95, 1.18][ptype];
        let living = clamp_round(
            (550.0 + 430.0 * bedrooms as f64) * type_factor * area_noise.sample(&mut rng),
            416.0,
            10_354.0,
        );
        let age = 1.0 + (97.0 * age_beta.sample(&mut rng)).round();
        let (dlo, dhi) = DRIVE[region];
        let drive = clamp_round(dlo + (dhi - dlo) * rng.random::<f64>(), 1.0, 26.0);

        let area_z = (living / 2000.0).ln();
        let full = clamp_round(1.5 + 1.1 * area_z + 0.6 * std_normal.sample(&mut rng), 0.0, 3.0);
        let half = clamp_round(0.4 + 0.5 * area_z + 0.5 * std_normal.sample(&mut rng), 0.0, 2.0);
        let tq = clamp_round(0.6 + 0.3 * area_z + 0.65 * std_normal.sample(&mut rng), 0.0, 2.0);
        let parking = clamp_round(1.6 + 0.5 * area_z + 0.6 * std_normal.sample(&mut rng), 0.0, 3.0);

        let mut lot = match ptype {
            0 if rng.random::<f64>() < 0.6 => 0.0,
            0 => (0.3 * lot_dist.sample(&mut rng)).round(),
            1 => (0.5 * lot_dist.sample(&mut rng)).round(),
            _ => (lot_dist.sample(&mut rng) * if region == 5 { 4.0 } else { 1.0 }).round(),
        };
        if lot > 0.0 && rng.random::<f64>() < cfg.outlier_rate {
            lot = (lot * rng.random_range(5.0..20.0)).round();
        }
        let hoa = match ptype {
            2 if rng.random::<f64>() < 0.75 => 0.0,
            _ => clamp_round(2_800.0 + 1_300.0 * std_normal.sample(&mut rng), 0.0, 7_113.0),
        };

        let e_walk = clamp_round(8.0 + 0.4 * drive + 9.0 * std_normal.sample(&mut rng).abs(), 2.0, 68.0);
        let m_walk = clamp_round(12.0 + 0.7 * drive + 16.0 * std_normal.sample(&mut rng).abs(), 2.0, 96.0);
        let h_walk = clamp_round(0.4 * m_walk + 0.6 * drive + 18.0 * std_normal.sample(&mut rng).abs(), 4.0, 122.0);

        let married = (MARRIED_BY_REGION[region] + 12.0 * std_normal.sample(&mut rng)).clamp(9.9, 70.3);
        let married = (married * 100.0).round() / 100.0;
        let income = clamp_round(INCOME_BY_REGION[region] + 16_000.0 * std_normal.sample(&mut rng), 19_985.0, 96_406.0);
        let pop = clamp_round(
            POP_BY_REGION[region] * (0.6 + 0.8 * rng.random::<f64>()),
            888.0,
            99_081.0,
        );

        let pool = f64::from(u8::from(rng.random::<f64>() < POOL_RATE));
        let solar = f64::from(u8::from(rng.random::<f64>() < SOLAR_RATE));

        let inputs = TruthInputs {
            living_area: living,
            drive_to_cbd: drive,
            age,
            full_baths: full,
            region,
            crime,
            property_type: ptype,
            e_rank,
        };
        let mu = truth.log_price(&inputs);
        let noise = if cfg.noise_std > 0.0 {
            cfg.noise_std * std_normal.sample(&mut rng)
        } else {
            0.0
        };
        clean.push(mu);
        prices.push((mu + noise).exp());

        let mask = |v: f64, rng: &mut ChaCha8Rng| {
            if cfg.missing_rate > 0.0 && rng.random::<f64>() < cfg.missing_rate {
                None
            } else {
                Some(v)
            }
        };
        let lot_cell = mask(lot, &mut rng);
        let pool_cell = mask(pool, &mut rng);
        let solar_cell = mask(solar, &mut rng);

        let row = [
            Some((i + 1) as f64),
            None, // price filled below
            lot_cell,
            Some(living),
            Some(age),
            Some(full),
            Some(half),
            Some(tq),
            Some(parking),
            Some(hoa),
            Some(drive),
            Some(e_walk),
            Some(m_walk),
            Some(h_walk),
            Some(married),
            Some(income),
            Some(pop),
            pool_cell,
            solar_cell,
        ];
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
        for (c, v) in cats.iter_mut().zip([e_rank, m_rank, 0, region, bedrooms, ptype, crime]) {
            c.push(Some(v));
        }
    }
    cols[1] = prices.into_iter().map(Some).collect();

    let schema = housing_schema();
    let columns = cols
        .into_iter()
        .map(ColumnData::Numeric)
        .chain(cats.into_iter().map(ColumnData::Categorical))
        .collect();
    let dataset = Dataset::new(schema, columns)?;
    Ok(SyntheticData {
        dataset,
        truth,
        clean_log_price: clean,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            n: 300,
            seed,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn same_config_gives_identical_bytes() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate(&small(7)).unwrap().dataset.write_csv(&mut a).unwrap();
        generate(&small(7)).unwrap().dataset.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        generate(&small(8)).unwrap().dataset.write_csv(&mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_missing_rate_means_no_missing_cells() {
        let cfg = GeneratorConfig {
            missing_rate: 0.0,
            ..small(3)
        };
        let ds = generate(&cfg).unwrap().dataset;
        assert!(ds.missing_mask().iter().flatten().all(|m| !m));
    }

    #[test]
    fn missing_cells_only_in_designated_columns() {
        let cfg = GeneratorConfig {
            missing_rate: 0.2,
            ..small(4)
        };
        let ds = generate(&cfg).unwrap().dataset;
        for (c, mask) in ds.schema().columns.iter().zip(ds.missing_mask()) {
            let any = mask.iter().any(|m| *m);
            let allowed = [LOT_AREA, POOL, SOLAR].contains(&c.name.as_str());
            assert_eq!(any, allowed, "column {}", c.name);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(generate(&GeneratorConfig { n: 49, ..small(1) }).is_err());
        assert!(generate(&GeneratorConfig { noise_std: -0.1, ..small(1) }).is_err());
        assert!(generate(&GeneratorConfig { missing_rate: 1.0, ..small(1) }).is_err());
    }

    #[test]
    fn age_effect_is_u_shaped() {
        let t = GroundTruth::default();
        assert!(t.age_effect(10.0) > t.age_effect(30.0));
        assert!(t.age_effect(30.0) > t.age_effect(50.0));
        assert!(t.age_effect(70.0) > t.age_effect(50.0));
        assert!(t.age_effect(95.0) > t.age_effect(70.0));
    }
}
