//! Sample statistics and Student-t confidence intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Confidence level of every interval produced here.
pub const CONFIDENCE: f64 = 0.95;

/// Two-sided 95% Student-t quantiles, `T_975[df - 1]` for `df` in `1..=200`.
const T_975: [f64; 200] = [
    12.706204736432095, 4.302652729696142, 3.182446305284263, 2.7764451051977987,
    2.570581835636314, 2.4469118511449692, 2.3646242515927844, 2.306004135204166,
    2.2621571628540993, 2.2281388519649385, 2.200985160082949, 2.1788128296634177,
    2.1603686564610127, 2.1447866879169273, 2.131449545559323, 2.1199052992210112,
    2.1098155778331806, 2.10092204024096, 2.093024054408263, 2.0859634472658364,
    2.079613844727662, 2.0738730679040147, 2.0686576104190406, 2.0638985616280205,
    2.059538552753294, 2.055529438642871, 2.0518305164802833, 2.048407141795244,
    2.045229642132703, 2.0422724563012373, 2.0395134463964077, 2.036933343460101,
    2.0345152974493383, 2.032244509317718, 2.0301079282503425, 2.0280940009804502,
    2.0261924630291093, 2.024394163911969, 2.0226909200367604, 2.0210753903062733,
    2.019540970441376, 2.018081702818444, 2.016692199227824, 2.0153675744437636,
    2.014103388880846, 2.0128955989194286, 2.0117405137297655, 2.010634757624232,
    2.0095752371292397, 2.008559112100761, 2.007583770315836, 2.006646805061688,
    2.0057459953178687, 2.004879288188057, 2.004044783289146, 2.003240718847872,
    2.002465459291007, 2.0017174841452356, 2.0009953780882674, 2.00029782201426,
    1.9996235849949393, 1.9989715170333786, 1.998340542520741, 1.9977296543176926,
    1.9971379083920033, 1.9965644189523113, 1.9960083540252962, 1.9954689314298435,
    1.9949454151072374, 1.994437111771186, 1.993943367845625, 1.9934635666618716,
    1.992997125889855, 1.9925434951809322, 1.9921021540022417, 1.9916726096446642,
    1.9912543953883843, 1.9908470688116904, 1.9904502102301282, 1.9900634212544457,
    1.9896863234569024, 1.9893185571365721, 1.9889597801751624, 1.9886096669757087,
    1.9882679074772216, 1.9879342062390202, 1.9876082815890703, 1.987289864831169,
    1.986978699506281, 1.9866745407037676, 1.9863771544186173, 1.98608631695113,
    1.9858018143458234, 1.985523441866604, 1.9852510035091888, 1.9849843115310182,
    1.9847231860271193, 1.984467454426692, 1.9842169515086827, 1.9839715184496334,
    1.983731002885281, 1.98349525849594, 1.98326414470971, 1.9830375264229898,
    1.9828152737371543, 1.9825972617102907, 1.9823833701230174, 1.9821734832574511,
    1.981967489688474, 1.98176528208651, 1.9815667570310707, 1.9813718148344004,
    1.98118035937458, 1.9809922979375063, 1.9808075410672, 1.9806260024239375,
    1.9804475986497292, 1.9802722492407059, 1.980099876426006, 1.9799304050527766,
    1.9797637624769302, 1.979599878459331, 1.9794386850670895, 1.9792801165796825,
    1.979124109399617, 1.9789706019673934, 1.9788195346805206, 1.978670849816362,
    1.978524491458605, 1.9783804054271528, 1.9782385392112583, 1.9780988419057233,
    1.9779612641500013, 1.9778257580700527, 1.977692277222804, 1.9775607765430832,
    1.9774312122928936, 1.9773035420129161, 1.977177724476122, 1.9770537196433882,
    1.9769314886210219, 1.9768109936200895, 1.976692197917468, 1.9765750658185364,
    1.9764595626214159, 1.9763456545827003, 1.9762333088845878, 1.9761224936033632,
    1.976013177679155, 1.9759053308869137, 1.9757989238085503, 1.9756939278061865,
    1.9755903149964584, 1.9754880582258318, 1.9753871310468782, 1.9752875076954723,
    1.975189163068866, 1.975092072704601, 1.9749962127602252, 1.9749015599937718,
    1.974808091744976, 1.9747157859171878, 1.9746246209599578, 1.9745345758522654,
    1.9744456300863589, 1.9743577636521854, 1.9742709570223844, 1.9741851911378205,
    1.9741004473936334, 1.9740167076257822, 1.9739339540980687, 1.9738521694896134,
    1.973771336882769, 1.9736914397514558, 1.9736124619498971, 1.973534387701743,
    1.9734572015895642, 1.9733808885447028, 1.9733054338374663, 1.9732308230676485,
    1.9731570421553688, 1.9730840773322158, 1.973011915132679, 1.9729405423858688,
    1.9728699462074988, 1.9728001139921347, 1.9727310334056902, 1.9726626923781652,
    1.9725950790966154, 1.9725281819983447, 1.9724619897643145, 1.9723964913127592,
    1.9723316757930007, 1.972267532579456, 1.9722040512658325, 1.9721412216594967,
    1.9720790337760217, 1.9720174778338955, 1.971956544249395, 1.9718962236316089,
];

/// The `0.975` quantile of Student's t with `df` degrees of freedom.
///
/// Tabulated up to 200 degrees of freedom, computed beyond that.
pub fn t_quantile(df: usize) -> f64 {
    assert!(df >= 1, "t quantile needs at least one degree of freedom");
    match T_975.get(df - 1) {
        Some(&t) => t,
        None => StudentsT::new(0.0, 1.0, df as f64)
            .expect("valid t distribution")
            .inverse_cdf(0.5 + CONFIDENCE / 2.0),
    }
}

/// Mean, sample standard deviation and 95% interval half-width of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub stddev: f64,
    pub ci_halfwidth: f64,
}

impl Summary {
    /// `None` for fewer than two observations.
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        let count = xs.len();
        if count < 2 {
            return None;
        }
        let n = count as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let stddev = var.sqrt();
        let ci_halfwidth = t_quantile(count - 1) * stddev / n.sqrt();
        Some(Self { count, mean, stddev, ci_halfwidth })
    }

    /// Half-width relative to the mean.
    pub fn relative_halfwidth(&self) -> f64 {
        self.ci_halfwidth / self.mean
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci_halfwidth
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci_halfwidth
    }

    /// Whether the two confidence intervals intersect.
    pub fn overlaps(&self, other: &Summary) -> bool {
        self.lower() <= other.upper() && other.lower() <= self.upper()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_matches_known_quantiles() {
        assert_eq!(t_quantile(1), 12.706204736432095);
        assert_eq!(t_quantile(9), 2.2621571628540993);
        assert_eq!(t_quantile(200), 1.9718962236316089);
    }

    #[test]
    fn table_agrees_with_distribution_inverse() {
        for df in 1..=200 {
            let exact = StudentsT::new(0.0, 1.0, df as f64).unwrap().inverse_cdf(0.975);
            assert!((t_quantile(df) - exact).abs() / exact < 1e-8, "df={df}");
        }
    }

    #[test]
    fn quantile_beyond_table() {
        // scipy: t.ppf(0.975, 201) and t.ppf(0.975, 500)
        assert!((t_quantile(201) - 1.9718365067776153).abs() < 1e-9);
        assert!((t_quantile(500) - 1.9647198374673438).abs() < 1e-9);
    }

    #[test]
    fn quantile_never_grows_with_more_repetitions() {
        for df in 1..400 {
            assert!(t_quantile(df + 1) <= t_quantile(df), "df={df}");
        }
    }

    #[test]
    fn summary_needs_two_samples() {
        assert_eq!(Summary::from_samples(&[]), None);
        assert_eq!(Summary::from_samples(&[1.0]), None);
    }

    #[test]
    fn overlap() {
        let a = Summary { count: 3, mean: 1.0, stddev: 0.0, ci_halfwidth: 0.1 };
        let b = Summary { mean: 1.15, ..a };
        let c = Summary { mean: 1.25, ..a };
        assert!(a.overlaps(&b));
        assert!(!a.overlaps(&c));
    }
}
