#include "texr/archetypes.hpp"

#include <algorithm>
#include <cmath>

#include "texr/hash.hpp"

namespace texr {

namespace {

Archetype cont(std::string name, std::string desc, double lo, double hi, double loc,
               double scale) {
    Archetype a;
    a.name = std::move(name);
    a.description = std::move(desc);
    a.continuous = true;
    a.lo = lo;
    a.hi = hi;
    a.loc = loc;
    a.scale = scale;
    return a;
}

Archetype disc(std::string name, std::string desc, std::vector<std::string> cats,
               std::vector<double> pmf) {
    Archetype a;
    a.name = std::move(name);
    a.description = std::move(desc);
    a.continuous = false;
    a.categories = std::move(cats);
    a.base_pmf = std::move(pmf);
    return a;
}

std::vector<Archetype> build_pool() {
    std::vector<Archetype> p;
    p.push_back(cont("age", "Age of the subject in years", 18, 80, 0.35, 0.18));
    p.push_back(cont("annual_income", "Reported annual income in local currency", 0, 200000, 0.30, 0.15));
    p.push_back(cont("credit_score", "Bureau credit score at observation time", 300, 850, 0.60, 0.15));
    p.push_back(cont("account_balance", "Primary account balance at month end", 0, 100000, 0.25, 0.20));
    p.push_back(cont("tenure_months", "Months since the relationship started", 0, 120, 0.40, 0.22));
    p.push_back(cont("heart_rate", "Resting heart rate in beats per minute", 40, 180, 0.35, 0.12));
    p.push_back(cont("body_temperature", "Body temperature in degrees Celsius", 35, 42, 0.25, 0.08));
    p.push_back(cont("systolic_bp", "Systolic blood pressure in mmHg", 80, 200, 0.40, 0.15));
    p.push_back(cont("response_time_ms", "Service response time in milliseconds", 1, 5000, 0.20, 0.15));
    p.push_back(cont("cpu_utilization", "Average CPU utilization percentage", 0, 100, 0.45, 0.20));
    p.push_back(cont("error_rate", "Fraction of failed operations", 0, 1, 0.10, 0.08));
    p.push_back(cont("satisfaction_score", "Survey satisfaction score on a 1-10 scale", 1, 10, 0.65, 0.18));
    p.push_back(cont("risk_score", "Composite risk score from 0 to 100", 0, 100, 0.35, 0.20));
    p.push_back(cont("purchase_amount", "Transaction amount for the purchase", 1, 5000, 0.20, 0.15));
    p.push_back(cont("session_duration_min", "Session duration in minutes", 0, 240, 0.25, 0.15));
    p.push_back(cont("click_through_rate", "Click-through rate of the placement", 0, 1, 0.15, 0.10));
    p.push_back(cont("monthly_charges", "Recurring monthly charges billed", 10, 200, 0.45, 0.20));
    p.push_back(cont("num_transactions", "Number of transactions in the period", 0, 500, 0.30, 0.18));
    p.push_back(cont("inventory_level", "Units currently held in stock", 0, 10000, 0.50, 0.20));
    p.push_back(cont("shipping_days", "Days between order and delivery", 1, 30, 0.30, 0.15));
    p.push_back(cont("battery_level", "Remaining battery charge percentage", 0, 100, 0.60, 0.20));
    p.push_back(cont("signal_strength_db", "Received signal strength in dBm", -120, -30, 0.55, 0.15));
    p.push_back(cont("rainfall_mm", "Accumulated rainfall in millimeters", 0, 300, 0.20, 0.15));
    p.push_back(cont("ambient_temperature", "Outdoor temperature in degrees Celsius", -20, 45, 0.55, 0.15));
    p.push_back(cont("humidity_pct", "Relative humidity percentage", 0, 100, 0.55, 0.18));
    p.push_back(cont("energy_kwh", "Energy consumed in kilowatt hours", 0, 1000, 0.35, 0.18));
    p.push_back(cont("glucose_level", "Blood glucose level in mg/dL", 50, 300, 0.30, 0.15));
    p.push_back(cont("cholesterol", "Total cholesterol in mg/dL", 100, 350, 0.40, 0.15));
    p.push_back(cont("review_length", "Length of the review text in characters", 0, 2000, 0.20, 0.15));
    p.push_back(cont("years_experience", "Years of professional experience", 0, 40, 0.30, 0.18));

    p.push_back(disc("churn_flag", "Whether the customer churned in the window",
                     {"yes", "no"}, {0.25, 0.75}));
    p.push_back(disc("subscription_tier", "Subscription plan tier",
                     {"basic", "standard", "premium"}, {0.50, 0.30, 0.20}));
    p.push_back(disc("device_type", "Device used for the interaction",
                     {"mobile", "desktop", "tablet"}, {0.55, 0.35, 0.10}));
    p.push_back(disc("region", "Geographic region of the record",
                     {"north", "south", "east", "west"}, {0.30, 0.25, 0.25, 0.20}));
    p.push_back(disc("payment_status", "Status of the most recent payment",
                     {"paid", "pending", "overdue"}, {0.70, 0.20, 0.10}));
    p.push_back(disc("employment_status", "Current employment situation",
                     {"employed", "self_employed", "unemployed", "retired"},
                     {0.55, 0.15, 0.15, 0.15}));
    p.push_back(disc("smoker", "Whether the subject is a smoker", {"yes", "no"}, {0.20, 0.80}));
    p.push_back(disc("diagnosis_stage", "Clinical stage at diagnosis",
                     {"early", "intermediate", "advanced"}, {0.50, 0.30, 0.20}));
    p.push_back(disc("loan_approved", "Final decision on the loan application",
                     {"approved", "rejected"}, {0.60, 0.40}));
    p.push_back(disc("fraud_flag", "Whether the transaction was fraudulent",
                     {"fraud", "legitimate"}, {0.05, 0.95}));
    p.push_back(disc("priority_level", "Ticket priority assigned at triage",
                     {"low", "medium", "high", "critical"}, {0.40, 0.30, 0.20, 0.10}));
    p.push_back(disc("contract_type", "Contract commitment period",
                     {"monthly", "annual", "two_year"}, {0.50, 0.30, 0.20}));
    p.push_back(disc("product_category", "Category of the purchased product",
                     {"electronics", "clothing", "home", "grocery"}, {0.30, 0.25, 0.20, 0.25}));
    p.push_back(disc("marital_status", "Marital status of the subject",
                     {"single", "married", "divorced"}, {0.40, 0.45, 0.15}));
    p.push_back(disc("education_level", "Highest completed education level",
                     {"high_school", "bachelor", "master", "doctorate"},
                     {0.30, 0.40, 0.22, 0.08}));
    p.push_back(disc("vehicle_class", "Class of the insured vehicle",
                     {"sedan", "suv", "truck", "compact"}, {0.35, 0.30, 0.15, 0.20}));
    p.push_back(disc("shift_type", "Work shift during the observation",
                     {"day", "night", "rotating"}, {0.50, 0.30, 0.20}));
    p.push_back(disc("membership_status", "Membership state of the account",
                     {"active", "lapsed", "trial"}, {0.60, 0.25, 0.15}));
    p.push_back(disc("alert_severity", "Severity of the emitted alert",
                     {"info", "warning", "error"}, {0.60, 0.30, 0.10}));
    p.push_back(disc("outcome", "Final recorded outcome of the case",
                     {"success", "failure"}, {0.70, 0.30}));
    return p;
}

} // namespace

const std::vector<Archetype>& archetype_pool() {
    static const std::vector<Archetype> pool = build_pool();
    return pool;
}

const Archetype* find_archetype(const std::string& name) {
    for (const auto& a : archetype_pool()) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

const std::vector<std::string>& category_pool() {
    static const std::vector<std::string> pool = {
        "Technology & Digital", "Health & Sciences", "Finance & Business",
        "Retail & Commerce", "Energy & Environment", "Transportation & Logistics",
        "Education & Research", "Media & Entertainment", "Agriculture & Food",
        "Manufacturing & Industry", "Government & Public Sector", "Telecommunications",
        "Real Estate & Housing", "Travel & Hospitality", "Insurance & Risk",
        "Sports & Fitness", "Security & Safety", "Human Resources & Workforce",
        "Legal & Compliance", "Nonprofit & Social Services", "Automotive & Mobility",
        "Construction & Infrastructure", "Pharmaceuticals & Biotech",
        "Gaming & Interactive", "Supply Chain & Procurement", "Science & Exploration",
        "Arts & Culture", "Maritime & Shipping", "Aerospace & Defense",
        "Mining & Resources",
    };
    return pool;
}

const std::vector<std::string>& domain_word_pool() {
    static const std::vector<std::string> pool = {
        "telemedicine", "wearable diagnostics", "clinical trials analytics",
        "hospital operations", "digital payments", "retail banking",
        "algorithmic trading", "microinsurance", "last-mile delivery",
        "fleet telematics", "warehouse robotics", "precision agriculture",
        "crop monitoring", "renewable grid management", "ev charging networks",
        "customer support automation", "subscription streaming", "esports analytics",
        "online tutoring", "mooc platforms", "smart metering",
        "predictive maintenance", "industrial iot", "quality inspection",
        "cybersecurity monitoring", "fraud analytics", "identity verification",
        "property management", "short-term rentals", "hotel revenue management",
        "airline operations", "urban mobility", "telecom network planning",
        "5g infrastructure", "cloud cost optimization", "devops observability",
        "social media analytics", "programmatic advertising", "email marketing",
        "loyalty programs",
    };
    return pool;
}

const std::vector<std::string>& scenario_pool() {
    static const std::vector<std::string> pool = {
        "customer_churn", "sales_forecasting", "inventory_tracking",
        "loan_default_prediction", "hospital_readmission_risk", "patient_no_show",
        "credit_risk_scoring", "fraud_detection", "equipment_failure_prediction",
        "energy_consumption", "employee_attrition", "ad_click_prediction",
        "delivery_delay_prediction", "insurance_claim_severity",
        "housing_price_estimation", "student_dropout_risk", "subscription_renewal",
        "product_return_prediction", "network_intrusion_detection",
        "crop_yield_estimation", "air_quality_forecasting", "traffic_congestion",
        "call_center_volume", "warranty_claim_prediction", "sepsis_onset_risk",
        "medication_adherence", "churn_win_back", "cart_abandonment",
        "lead_conversion", "demand_forecasting", "price_optimization",
        "sensor_anomaly_detection", "server_downtime_prediction",
        "customer_lifetime_value", "readmission_cost_estimation",
        "claims_fraud_screening", "route_optimization_outcome",
        "user_engagement_scoring", "content_recommendation_feedback",
        "payment_default_risk",
    };
    return pool;
}

namespace {

// Unit interval value derived from a hash, stable across runs.
double unit_hash(std::string_view s) {
    return static_cast<double>(fnv1a64(s) >> 11) * 0x1.0p-53;
}

} // namespace

ContinuousTendency continuous_tendency(const std::string& feature_name) {
    if (const Archetype* a = find_archetype(feature_name); a && a->continuous) {
        return {a->loc, a->scale};
    }
    double u1 = unit_hash(feature_name + "#loc");
    double u2 = unit_hash(feature_name + "#scale");
    return {0.2 + 0.6 * u1, 0.08 + 0.17 * u2};
}

std::vector<double> discrete_tendency(const std::string& feature_name, size_t n_categories) {
    if (const Archetype* a = find_archetype(feature_name);
        a && !a->continuous && a->base_pmf.size() == n_categories) {
        return a->base_pmf;
    }
    // Geometric-ish decay with a hash-derived rate; never degenerate.
    double decay = 0.3 + 0.9 * unit_hash(feature_name + "#pmf");
    std::vector<double> pmf(n_categories);
    double total = 0.0;
    for (size_t i = 0; i < n_categories; ++i) {
        pmf[i] = std::exp(-decay * static_cast<double>(i));
        total += pmf[i];
    }
    for (auto& p : pmf) p /= total;
    return pmf;
}

double pair_tilt(const std::string& child_name, const std::string& parent_name) {
    double u = unit_hash(child_name + "\x1f" + parent_name);
    return 2.0 * u - 1.0;
}

double value_position(const std::string& parent_name, const std::string& rendered_value) {
    if (rendered_value.size() == 2 && rendered_value[0] == 'Q' && rendered_value[1] >= '1' &&
        rendered_value[1] <= '4') {
        static const double pos[4] = {-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0};
        return pos[rendered_value[1] - '1'];
    }
    return 2.0 * unit_hash(parent_name + "=" + rendered_value) - 1.0;
}

double config_tilt(const std::string& child_name,
                   const std::vector<std::pair<std::string, std::string>>& parent_values) {
    double tilt = 0.0;
    for (const auto& [pname, pval] : parent_values) {
        tilt += pair_tilt(child_name, pname) * value_position(pname, pval);
    }
    return std::clamp(tilt, -1.0, 1.0);
}

std::array<double, 4> quartile_probs_from_gaussian(double loc, double scale) {
    auto cdf = [&](double x) {
        return 0.5 * (1.0 + std::erf((x - loc) / (scale * std::sqrt(2.0))));
    };
    std::array<double, 4> out{};
    double prev = cdf(0.0);
    double total = cdf(1.0) - prev;
    if (total < 1e-12) {
        // Degenerate placement: all mass in the nearest quartile.
        int q = std::clamp(static_cast<int>(loc * 4.0), 0, 3);
        out[static_cast<size_t>(q)] = 1.0;
        return out;
    }
    for (int q = 0; q < 4; ++q) {
        double next = cdf(0.25 * (q + 1));
        out[static_cast<size_t>(q)] = (next - prev) / total;
        prev = next;
    }
    return out;
}

} // namespace texr
